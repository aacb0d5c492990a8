"""Utility-side measurements and the consolidated privacy-utility report.

GAN-test is the accuracy of a real-data classifier on generated samples
(precision-like); GAN-train is the accuracy on real data of a classifier
trained on generated samples (recall-like).  Unconditional generators emit
unlabeled images, so a fixed oracle classifier trained on the full labeled
corpus assigns pseudo-labels for both measures; the same oracle instance is
reused across trainers to keep the numbers comparable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .attacks import dmia_blackbox, dmia_whitebox, tvd_attack
from .data import AttackPool, LabeledDataset
from .metrics import (
    ScoreSet,
    TAG_FAKE,
    TAG_HOLDOUT,
    TAG_TRAIN,
    bhattacharyya_hist,
    estimate_densities,
    fano_lower_bound,
    generalization_gap,
    memorization_ratio,
    score_set,
)
from .models import ArchSpec, Network, build_network
from .trainers import TrainConfig, TrainedBundle, TrainingError, _BatchStream, clamp_scores

REPORT_VERSION = 1


@dataclass
class Classifier:
    """A trained softmax classifier plus its provenance and test accuracy."""

    network: Network
    training_source: str  # "real" or "generated"
    accuracy_on_real_test: float

    @property
    def num_classes(self) -> int:
        return int(self.network.output_shape)

    def probabilities(self, images: np.ndarray) -> np.ndarray:
        return self.network.predict(images)

    def predict_labels(self, images: np.ndarray) -> np.ndarray:
        return self.probabilities(images).argmax(axis=1)


def _accuracy(network: Network, images: np.ndarray, labels: np.ndarray) -> float:
    return float((network.predict(images).argmax(axis=1) == labels).mean())


def train_classifier(
    data: LabeledDataset,
    indices: np.ndarray,
    preset: ArchSpec,
    seed: int,
    epochs: int = 10,
    batch_size: int = 64,
    training_source: str = "real",
) -> Classifier:
    """Train the evaluation classifier on the given dataset indices.

    Uses SGD (lr 0.01, momentum 0.9) on the cross-entropy of the softmax
    output.  Held-out accuracy is measured on the complement of ``indices``
    (or on the training indices when nothing is left over).
    """

    if data.labels is None:
        raise ValueError("classifier training requires labels")
    indices = np.asarray(indices, dtype=np.int64)
    if len(indices) == 0:
        raise ValueError("empty training index list")

    torch.manual_seed(seed)
    network = build_network(preset, seed)
    opt = torch.optim.SGD(network.module.parameters(), lr=0.01, momentum=0.9)

    images = torch.as_tensor(data.images[indices]).permute(0, 3, 1, 2).contiguous()
    labels = torch.as_tensor(data.labels[indices], dtype=torch.long)
    stream = _BatchStream(len(indices), min(batch_size, len(indices)), seed + 1)
    iters = -(-len(indices) // batch_size)

    network.module.train()
    for _ in range(epochs):
        for _ in range(iters):
            batch = stream.next()
            opt.zero_grad()
            probs = clamp_scores(network.module(images[batch]))
            loss = -torch.log(probs[torch.arange(len(batch)), labels[batch]]).mean()
            loss.backward()
            opt.step()
            if not math.isfinite(float(loss.detach())):
                raise TrainingError("non-finite classifier loss")

    rest = np.setdiff1d(np.arange(len(data)), indices)
    eval_idx = rest if len(rest) else indices
    acc = _accuracy(network, data.images[eval_idx], data.labels[eval_idx])
    return Classifier(network=network, training_source=training_source, accuracy_on_real_test=acc)


def _generated_01(generator: Network, n_samples: int, seed: int) -> np.ndarray:
    images = generator.generate(n_samples, seed)
    lo, hi = generator.pixel_range
    if (lo, hi) != (0.0, 1.0):
        images = (images - lo) / (hi - lo)
    return np.clip(images, 0.0, 1.0)


def gan_test(
    eval_classifier: Classifier,
    oracle: Classifier,
    generator: Network,
    n_samples: int = 10000,
    seed: int = 0,
) -> float:
    """Agreement rate of the real-data classifier with the oracle's labels on
    generated samples."""

    if eval_classifier.num_classes != oracle.num_classes:
        raise ValueError("classifier and oracle class counts differ")
    images = _generated_01(generator, n_samples, seed)
    return float((eval_classifier.predict_labels(images) == oracle.predict_labels(images)).mean())


def gan_train(
    generator: Network,
    oracle: Classifier,
    real_test: LabeledDataset,
    n_samples: int = 10000,
    preset: ArchSpec | None = None,
    seed: int = 0,
    epochs: int = 10,
) -> float:
    """Accuracy on real data of a fresh classifier trained on generated
    samples with oracle pseudo-labels."""

    if real_test.labels is None:
        raise ValueError("real_test must carry labels")
    if preset is None:
        preset = oracle.network.spec
    images = _generated_01(generator, n_samples, seed)
    pseudo = oracle.predict_labels(images)
    synthetic = LabeledDataset(images=images, labels=pseudo, name="generated")
    clf = train_classifier(
        synthetic,
        np.arange(n_samples),
        preset,
        seed=seed + 1,
        epochs=epochs,
        training_source="generated",
    )
    return _accuracy(clf.network, real_test.images, real_test.labels)


def class_distribution(
    generator: Network, oracle: Classifier, n_samples: int = 10000, seed: int = 0
) -> np.ndarray:
    """Histogram of oracle labels over generated samples."""

    images = _generated_01(generator, n_samples, seed)
    return np.bincount(oracle.predict_labels(images), minlength=oracle.num_classes)


@dataclass
class EvalAssets:
    """Shared evaluation fixtures: the oracle, the real-data classifier, and
    the real test subset used by gan_train."""

    oracle: Classifier | None = None
    eval_classifier: Classifier | None = None
    real_test: LabeledDataset | None = None
    classifier_preset: ArchSpec | None = None
    aux_attack_config: TrainConfig | None = None
    n_samples: int = 10000
    n_memorization: int = 2000
    bins: int = 100
    classifier_epochs: int = 10
    seed: int = 0


_SKIP = object()


@dataclass
class MetricsReport:
    """One experiment's privacy and utility numbers.

    Every optional metric is either populated or listed in ``skipped`` with a
    short reason.
    """

    run_id: str
    prior: float
    gap: float
    rho_tr_te: float
    rho_tr_fake: float | None
    memorization: float
    mia_whitebox: float
    tvd: float
    fano_bound: float
    mia_blackbox: float | None = None
    gan_test: float | None = None
    gan_train: float | None = None
    class_histogram: list | None = None
    config_fingerprint: dict = field(default_factory=dict)
    skipped: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def enc(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            return v

        return {
            "report_version": REPORT_VERSION,
            "run_id": self.run_id,
            "prior": self.prior,
            "gap": self.gap,
            "rho_tr_te": self.rho_tr_te,
            "rho_tr_fake": self.rho_tr_fake,
            "memorization": enc(self.memorization),
            "mia_whitebox": self.mia_whitebox,
            "mia_blackbox": self.mia_blackbox,
            "tvd": self.tvd,
            "fano_bound": self.fano_bound,
            "gan_test": self.gan_test,
            "gan_train": self.gan_train,
            "class_histogram": self.class_histogram,
            "config_fingerprint": self.config_fingerprint,
            "skipped": self.skipped,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        mem = d["memorization"]
        return cls(
            run_id=d["run_id"],
            prior=d["prior"],
            gap=d["gap"],
            rho_tr_te=d["rho_tr_te"],
            rho_tr_fake=d["rho_tr_fake"],
            memorization=math.inf if mem == "inf" else mem,
            mia_whitebox=d["mia_whitebox"],
            mia_blackbox=d["mia_blackbox"],
            tvd=d["tvd"],
            fano_bound=d["fano_bound"],
            gan_test=d["gan_test"],
            gan_train=d["gan_train"],
            class_histogram=d["class_histogram"],
            config_fingerprint=d["config_fingerprint"],
            skipped=d["skipped"],
        )

    @classmethod
    def load(cls, path: Path) -> "MetricsReport":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def csv_row(self) -> dict:
        """Flat single-row view of the report (histogram joined with ';')."""

        d = self.to_dict()
        d.pop("config_fingerprint")
        d.pop("skipped")
        hist = d.pop("class_histogram")
        d["class_histogram"] = ";".join(str(c) for c in hist) if hist else ""
        tr = self.config_fingerprint.get("trainer", {})
        d["model"] = tr.get("kind", "")
        d["lambda"] = tr.get("lambda", "")
        return d


def privacy_utility_report(
    bundle: TrainedBundle, pool: AttackPool, assets: EvalAssets, run_id: str = "run"
) -> MetricsReport:
    """Run the full metric battery for one trained bundle."""

    if len(pool) != len(bundle.split.train_idx) + len(bundle.split.holdout_idx):
        raise ValueError("pool does not match the bundle's split")

    fakes = _generated_01(bundle.generator, min(assets.n_samples, 2048), seed=assets.seed)
    scores = score_set(bundle.discriminator, pool, fake_samples=fakes)

    gap = generalization_gap(scores, phi="identity")
    rho_tr_te = bhattacharyya_hist(
        estimate_densities(scores, TAG_TRAIN, TAG_HOLDOUT, bins=assets.bins)
    )
    rho_tr_fake = bhattacharyya_hist(
        estimate_densities(scores, TAG_TRAIN, TAG_FAKE, bins=assets.bins)
    )
    fano = fano_lower_bound(scores, log_base="nats")
    tvd = tvd_attack(scores, bins=assets.bins)

    train_images = pool.samples[pool.membership]
    test_images = pool.samples[~pool.membership]
    gen_for_mem = _generated_01(bundle.generator, assets.n_memorization, seed=assets.seed + 1)
    memorization = memorization_ratio(train_images, test_images, gen_for_mem)

    whitebox = dmia_whitebox(bundle.discriminator, pool)

    skipped: dict[str, str] = {}
    blackbox_acc = None
    if assets.aux_attack_config is not None:
        blackbox_acc = dmia_blackbox(
            bundle.generator, pool, assets.aux_attack_config, sample_seed=assets.seed + 2
        ).accuracy
    else:
        skipped["mia_blackbox"] = "no auxiliary attack config"

    gt = gtr = None
    histogram = None
    if assets.oracle is not None and assets.eval_classifier is not None and assets.real_test is not None:
        gt = gan_test(
            assets.eval_classifier, assets.oracle, bundle.generator,
            n_samples=assets.n_samples, seed=assets.seed + 3,
        )
        gtr = gan_train(
            bundle.generator, assets.oracle, assets.real_test,
            n_samples=assets.n_samples,
            preset=assets.classifier_preset or assets.oracle.network.spec,
            seed=assets.seed + 4, epochs=assets.classifier_epochs,
        )
        histogram = class_distribution(
            bundle.generator, assets.oracle, n_samples=assets.n_samples, seed=assets.seed + 5
        ).tolist()
    else:
        skipped["gan_test"] = skipped["gan_train"] = skipped["class_histogram"] = (
            "no labeled evaluation assets"
        )

    return MetricsReport(
        run_id=run_id,
        prior=pool.prior,
        gap=gap,
        rho_tr_te=rho_tr_te,
        rho_tr_fake=rho_tr_fake,
        memorization=memorization,
        mia_whitebox=whitebox.accuracy,
        mia_blackbox=blackbox_acc,
        tvd=tvd,
        fano_bound=fano,
        gan_test=gt,
        gan_train=gtr,
        class_histogram=histogram,
        config_fingerprint={},
        skipped=skipped,
    )
