"""The three training procedures and their loss primitives.

``gan`` alternates discriminator BCE updates with non-saturating generator
updates.  ``megan`` replaces the generator objective with the negative binary
entropy of the fake scores, so the generator pushes the discriminator toward
maximum uncertainty instead of fooling it.  ``mimgan`` adds a Gaussian
adversary that estimates real samples from fakes; the generator pays a
lambda-weighted penalty for any likelihood the adversary can assign, which
caps how much the synthetic samples can reveal about the training set.

All minibatch sampling runs off explicit, per-purpose torch generators, so a
fixed seed reproduces the full training history on one device.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import LabeledDataset, SplitIndices
from .metrics import (
    DEFAULT_BINS,
    SCORE_EPS,
    ScoreSet,
    TAG_FAKE,
    TAG_HOLDOUT,
    TAG_TRAIN,
    bhattacharyya_hist,
    binary_entropy,
    estimate_densities,
)
from .models import (
    AdversaryOutput,
    ArchSpec,
    Network,
    build_network,
    save_checkpoint,
    split_adversary_output,
)

TRAINER_KINDS = ("gan", "megan", "mimgan")

HISTORY_COLUMNS = (
    "epoch",
    "d_loss",
    "g_loss",
    "a_loss",
    "mean_train_score",
    "mean_fake_score",
    "fake_entropy",
    "rho_estimate",
)


class TrainingError(RuntimeError):
    """Raised when a run diverges (non-finite loss) or cannot proceed."""


@dataclass(frozen=True)
class OptimizerConfig:
    name: str = "adam"
    lr: float = 2e-4
    beta1: float = 0.5
    momentum: float = 0.0

    def build(self, params):
        if self.name == "adam":
            return torch.optim.Adam(params, lr=self.lr, betas=(self.beta1, 0.999))
        if self.name == "sgd":
            return torch.optim.SGD(params, lr=self.lr, momentum=self.momentum)
        raise ValueError(f"unknown optimizer {self.name!r}")


@dataclass(frozen=True)
class SeedRecord:
    """Per-purpose RNG seeds, derived from one master seed."""

    weights: int
    data: int
    latent: int
    pairing: int
    eval: int

    @classmethod
    def from_master(cls, seed: int) -> "SeedRecord":
        return cls(
            weights=seed,
            data=seed + 1000,
            latent=seed + 2000,
            pairing=seed + 3000,
            eval=seed + 4000,
        )


@dataclass
class TrainConfig:
    """Everything a trainer needs besides the data and the split."""

    trainer: str
    generator: ArchSpec
    discriminator: ArchSpec
    adversary: ArchSpec | None = None
    batch_size: int = 32
    k: int | None = None  # generator steps (gan/megan); disc+adversary steps (mimgan)
    lambda_mi: float = 0.0
    epochs: int = 50
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval_every: int = 10
    eval_samples: int = 512
    snapshot_cap: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.trainer not in TRAINER_KINDS:
            raise ValueError(f"trainer must be one of {TRAINER_KINDS}, got {self.trainer!r}")
        if self.k is None:
            self.k = 2 if self.trainer == "megan" else 1
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lambda_mi < 0:
            raise ValueError("lambda_mi must be nonnegative")
        if self.trainer == "mimgan" and self.adversary is None:
            raise ValueError("mimgan requires an adversary architecture")

    @property
    def seeds(self) -> SeedRecord:
        return SeedRecord.from_master(self.seed)


@dataclass
class TrainedBundle:
    """Trained networks plus the per-epoch history and score snapshots."""

    generator: Network
    discriminator: Network
    adversary: Network | None
    history: list
    snapshots: dict  # epoch -> {tag: np.ndarray of scores}
    config: TrainConfig
    split: SplitIndices

    def history_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=HISTORY_COLUMNS)
            writer.writeheader()
            for row in self.history:
                writer.writerow({k: ("" if row.get(k) is None else repr(row[k]) if isinstance(row[k], float) else row[k]) for k in HISTORY_COLUMNS})

    def snapshots_csv(self, path: Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "tag", "score"])
            for epoch in sorted(self.snapshots):
                for tag, scores in self.snapshots[epoch].items():
                    for s in scores:
                        writer.writerow([epoch, tag, repr(float(s))])


# --------------------------------------------------------------------------
# Loss primitives.  Scores are eps-clamped before any logarithm.
# --------------------------------------------------------------------------


def clamp_scores(scores: torch.Tensor) -> torch.Tensor:
    return scores.clamp(SCORE_EPS, 1.0 - SCORE_EPS)


def discriminator_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy of the real-vs-fake game."""

    d_real = clamp_scores(d_real)
    d_fake = clamp_scores(d_fake)
    return -(torch.log(d_real).mean() + torch.log(1.0 - d_fake).mean())


def generator_loss_nonsaturating(d_fake: torch.Tensor) -> torch.Tensor:
    """-E[log D(G(z))], the saturation-free generator objective."""

    return -torch.log(clamp_scores(d_fake)).mean()


def generator_loss_entropy(d_fake: torch.Tensor) -> torch.Tensor:
    """Mean of D log D + (1-D) log(1-D): the negative fake-score entropy."""

    d = clamp_scores(d_fake)
    return (d * torch.log(d) + (1.0 - d) * torch.log(1.0 - d)).mean()


def gaussian_nll(x: torch.Tensor, out: AdversaryOutput) -> torch.Tensor:
    """Negative log density of x under the diagonal Gaussian (mu, exp(log_var)).

    Accepts a single d-vector or a (B, d) batch; returns a scalar or a (B,)
    tensor of per-sample values.
    """

    if x.shape != out.mu.shape:
        raise ValueError(f"dimension mismatch: x {tuple(x.shape)} vs mu {tuple(out.mu.shape)}")
    elem = out.log_var + (x - out.mu) ** 2 * torch.exp(-out.log_var) + math.log(2.0 * math.pi)
    return 0.5 * elem.sum(dim=-1)


def generator_loss_mimgan(
    d_fake: torch.Tensor, nll: torch.Tensor, lambda_mi: float
) -> torch.Tensor:
    """Non-saturating loss plus lambda times the adversary's log-likelihood.

    ``nll`` is the per-sample gaussian_nll of the paired real images; the
    penalty term is lambda * mean(log N) = -lambda * mean(nll).
    """

    return generator_loss_nonsaturating(d_fake) - lambda_mi * nll.mean()


# --------------------------------------------------------------------------
# Training loops.
# --------------------------------------------------------------------------


def _image_tensor(images: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(images, dtype=torch.float32).permute(0, 3, 1, 2).contiguous()


class _BatchStream:
    """Endless stream of size-B index batches over concatenated shuffles.

    Every sample appears exactly once per shuffle cycle and batches always
    have exactly B elements, so batch-norm never sees a degenerate batch.
    """

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = batch_size
        self.gen = torch.Generator().manual_seed(seed)
        self._queue = torch.empty(0, dtype=torch.long)

    def next(self) -> torch.Tensor:
        while len(self._queue) < self.batch_size:
            self._queue = torch.cat([self._queue, torch.randperm(self.n, generator=self.gen)])
        batch, self._queue = self._queue[: self.batch_size], self._queue[self.batch_size :]
        return batch


def _set_requires_grad(module: torch.nn.Module, flag: bool) -> None:
    for p in module.parameters():
        p.requires_grad_(flag)


class _Run:
    """Shared scaffolding: batching, evaluation, history, checkpointing."""

    def __init__(self, config: TrainConfig, data: LabeledDataset, split: SplitIndices,
                 checkpoint_dir: Path | None):
        split.validate_for(len(data))
        seeds = config.seeds
        torch.manual_seed(seeds.weights)  # guards any internal torch randomness

        self.config = config
        self.split = split
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None

        self.generator = build_network(config.generator, seeds.weights)
        self.discriminator = build_network(config.discriminator, seeds.weights + 1)
        self.adversary = (
            build_network(config.adversary, seeds.weights + 2) if config.adversary else None
        )
        lo, hi = self.generator.pixel_range
        self.rescale = (lo, hi) != (0.0, 1.0)

        self.train_images = _image_tensor(data.images[split.train_idx])
        self.holdout_images = _image_tensor(data.images[split.holdout_idx])
        if self.rescale:
            # tanh-range generator: move real data to [-1, 1] at the model boundary
            self.train_images = self.train_images * (hi - lo) + lo
            self.holdout_images = self.holdout_images * (hi - lo) + lo

        self.stream = _BatchStream(len(self.train_images), config.batch_size, seeds.data)
        self.latent_gen = torch.Generator().manual_seed(seeds.latent)
        self.pairing_gen = torch.Generator().manual_seed(seeds.pairing)
        self.eval_gen = torch.Generator().manual_seed(seeds.eval)

        eval_rng = np.random.default_rng(seeds.eval)
        n_eval = min(config.eval_samples, len(self.train_images))
        self.eval_train_idx = torch.as_tensor(
            np.sort(eval_rng.choice(len(self.train_images), size=n_eval, replace=False))
        )

        self.latent_dim = self.generator.latent_dim
        self.history: list[dict] = []
        self.snapshots: dict[int, dict] = {}

    def latent(self, n: int) -> torch.Tensor:
        return torch.randn(n, self.latent_dim, generator=self.latent_gen)

    def real_batch(self) -> torch.Tensor:
        return self.train_images[self.stream.next()]

    def pairing_permutation(self, n: int) -> torch.Tensor:
        return torch.randperm(n, generator=self.pairing_gen)

    def check_finite(self, value: torch.Tensor, which: str, epoch: int, iteration: int) -> float:
        v = float(value.detach())
        if not math.isfinite(v):
            self.dump_checkpoints(tag="crash")
            raise TrainingError(
                f"non-finite {which} loss ({v}) at epoch {epoch}, iteration {iteration}"
            )
        return v

    def _scores(self, images: torch.Tensor) -> np.ndarray:
        if len(images) == 0:
            return np.empty(0)
        self.discriminator.module.eval()
        outs = []
        with torch.no_grad():
            for i in range(0, len(images), 512):
                outs.append(self.discriminator.module(images[i : i + 512]).squeeze(1))
        return torch.cat(outs).double().numpy()

    def _fake_images(self, n: int) -> torch.Tensor:
        self.generator.module.eval()
        outs = []
        with torch.no_grad():
            for i in range(0, n, 512):
                z = torch.randn(min(512, n - i), self.latent_dim, generator=self.eval_gen)
                outs.append(self.generator.module(z))
        return torch.cat(outs)

    def end_epoch(self, epoch: int, d_losses, g_losses, a_losses=None) -> None:
        n_eval = len(self.eval_train_idx)
        train_scores = self._scores(self.train_images[self.eval_train_idx])
        fake_scores = self._scores(self._fake_images(n_eval))
        pair = estimate_densities(
            ScoreSet(
                scores=np.concatenate([train_scores, fake_scores]),
                tags=np.array([TAG_TRAIN] * len(train_scores) + [TAG_FAKE] * len(fake_scores), dtype=object),
            ),
            TAG_TRAIN,
            TAG_FAKE,
            bins=DEFAULT_BINS,
        )
        row = {
            "epoch": epoch,
            "d_loss": float(np.mean(d_losses)),
            "g_loss": float(np.mean(g_losses)),
            "a_loss": float(np.mean(a_losses)) if a_losses else None,
            "mean_train_score": float(train_scores.mean()),
            "mean_fake_score": float(fake_scores.mean()),
            "fake_entropy": float(np.mean(binary_entropy(fake_scores))),
            "rho_estimate": bhattacharyya_hist(pair),
        }
        self.history.append(row)

        last = epoch == self.config.epochs
        if epoch % self.config.eval_every == 0 or last:
            cap = self.config.snapshot_cap
            snap = {
                TAG_TRAIN: self._scores(self.train_images[:cap]),
                TAG_FAKE: self._scores(self._fake_images(min(cap, len(self.train_images)))),
            }
            if len(self.holdout_images):
                snap[TAG_HOLDOUT] = self._scores(self.holdout_images[:cap])
            self.snapshots[epoch] = snap
            self.dump_checkpoints(tag=f"epoch{epoch:04d}")

    def dump_checkpoints(self, tag: str) -> None:
        if self.checkpoint_dir is None:
            return
        save_checkpoint(self.generator, self.checkpoint_dir / f"generator_{tag}.gpck")
        save_checkpoint(self.discriminator, self.checkpoint_dir / f"discriminator_{tag}.gpck")
        if self.adversary is not None:
            save_checkpoint(self.adversary, self.checkpoint_dir / f"adversary_{tag}.gpck")

    def bundle(self) -> TrainedBundle:
        return TrainedBundle(
            generator=self.generator,
            discriminator=self.discriminator,
            adversary=self.adversary,
            history=self.history,
            snapshots=self.snapshots,
            config=self.config,
            split=self.split,
        )


def _iterations_per_epoch(n_train: int, batch_size: int) -> int:
    return -(-n_train // batch_size)


def train_gan(config: TrainConfig, data: LabeledDataset, split: SplitIndices,
              checkpoint_dir=None) -> TrainedBundle:
    """Vanilla GAN: BCE discriminator, non-saturating generator."""

    if config.trainer != "gan":
        raise ValueError(f"config.trainer must be 'gan', got {config.trainer!r}")
    return _train_adversarial(config, data, split, checkpoint_dir, generator_loss_nonsaturating)


def train_megan(config: TrainConfig, data: LabeledDataset, split: SplitIndices,
                checkpoint_dir=None) -> TrainedBundle:
    """Maximum-entropy GAN: the generator maximizes fake-score entropy."""

    if config.trainer != "megan":
        raise ValueError(f"config.trainer must be 'megan', got {config.trainer!r}")
    return _train_adversarial(config, data, split, checkpoint_dir, generator_loss_entropy)


def _train_adversarial(config, data, split, checkpoint_dir, gen_loss_fn) -> TrainedBundle:
    run = _Run(config, data, split, checkpoint_dir)
    g_opt = config.optimizer.build(run.generator.module.parameters())
    d_opt = config.optimizer.build(run.discriminator.module.parameters())
    iters = _iterations_per_epoch(len(run.train_images), config.batch_size)

    for epoch in range(1, config.epochs + 1):
        d_losses, g_losses = [], []
        for it in range(iters):
            real = run.real_batch()
            z = run.latent(config.batch_size)
            run.generator.module.train()
            run.discriminator.module.train()

            fake = run.generator.module(z)
            d_opt.zero_grad()
            d_loss = discriminator_loss(
                run.discriminator.module(real).squeeze(1),
                run.discriminator.module(fake.detach()).squeeze(1),
            )
            d_loss.backward()
            d_opt.step()
            d_losses.append(run.check_finite(d_loss, "discriminator", epoch, it))

            _set_requires_grad(run.discriminator.module, False)
            for _ in range(config.k):
                zg = run.latent(config.batch_size)
                g_opt.zero_grad()
                g_loss = gen_loss_fn(run.discriminator.module(run.generator.module(zg)).squeeze(1))
                g_loss.backward()
                g_opt.step()
                g_losses.append(run.check_finite(g_loss, "generator", epoch, it))
            _set_requires_grad(run.discriminator.module, True)

        run.end_epoch(epoch, d_losses, g_losses)
    return run.bundle()


def train_mimgan(config: TrainConfig, data: LabeledDataset, split: SplitIndices,
                 checkpoint_dir=None) -> TrainedBundle:
    """Information-leakage-penalized GAN with a Gaussian adversary."""

    if config.trainer != "mimgan":
        raise ValueError(f"config.trainer must be 'mimgan', got {config.trainer!r}")
    run = _Run(config, data, split, checkpoint_dir)
    flat = run.train_images.shape[1] * run.train_images.shape[2] * run.train_images.shape[3]
    if run.adversary.output_shape != 2 * flat:
        raise TrainingError(
            f"adversary head emits {run.adversary.output_shape} units, expected {2 * flat}"
        )

    g_opt = config.optimizer.build(run.generator.module.parameters())
    d_opt = config.optimizer.build(run.discriminator.module.parameters())
    a_opt = config.optimizer.build(run.adversary.module.parameters())
    iters = _iterations_per_epoch(len(run.train_images), config.batch_size)

    for epoch in range(1, config.epochs + 1):
        d_losses, g_losses, a_losses = [], [], []
        for it in range(iters):
            run.generator.module.train()
            run.discriminator.module.train()
            run.adversary.module.train()

            for _ in range(config.k):
                z = run.latent(config.batch_size)
                real = run.real_batch()
                with torch.no_grad():
                    fake = run.generator.module(z)

                d_opt.zero_grad()
                d_loss = discriminator_loss(
                    run.discriminator.module(real).squeeze(1),
                    run.discriminator.module(fake).squeeze(1),
                )
                d_loss.backward()
                d_opt.step()
                d_losses.append(run.check_finite(d_loss, "discriminator", epoch, it))

                a_opt.zero_grad()
                out = split_adversary_output(run.adversary.module(fake))
                paired = real[run.pairing_permutation(len(real))].flatten(1)
                a_loss = gaussian_nll(paired, out).mean()
                a_loss.backward()
                a_opt.step()
                a_losses.append(run.check_finite(a_loss, "adversary", epoch, it))

            z = run.latent(config.batch_size)
            real = run.real_batch()
            _set_requires_grad(run.discriminator.module, False)
            _set_requires_grad(run.adversary.module, False)
            g_opt.zero_grad()
            fake = run.generator.module(z)
            out = split_adversary_output(run.adversary.module(fake))
            paired = real[run.pairing_permutation(len(real))].flatten(1)
            g_loss = generator_loss_mimgan(
                run.discriminator.module(fake).squeeze(1),
                gaussian_nll(paired, out),
                config.lambda_mi,
            )
            g_loss.backward()
            g_opt.step()
            g_losses.append(run.check_finite(g_loss, "generator", epoch, it))
            _set_requires_grad(run.discriminator.module, True)
            _set_requires_grad(run.adversary.module, True)

        run.end_epoch(epoch, d_losses, g_losses, a_losses)
    return run.bundle()


def train(config: TrainConfig, data: LabeledDataset, split: SplitIndices,
          checkpoint_dir=None) -> TrainedBundle:
    """Dispatch to the trainer named in the config."""

    fn = {"gan": train_gan, "megan": train_megan, "mimgan": train_mimgan}[config.trainer]
    return fn(config, data, split, checkpoint_dir=checkpoint_dir)
