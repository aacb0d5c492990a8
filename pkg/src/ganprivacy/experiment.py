"""Config-driven experiment runner: one YAML file trains one model and runs
the full attack/evaluation battery into a self-contained run directory.

A run directory holds ``config.yaml`` (a copy), ``checkpoints/``,
``history.csv``, ``scores.csv`` (per-checkpoint score snapshots),
``report.json`` (deterministic; no timestamps), ``run_meta.json``
(timestamps and environment notes), and the plots.
"""

from __future__ import annotations

import json
import platform
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import data as data_mod
from .data import DataError
from .evaluation import EvalAssets, MetricsReport, privacy_utility_report, train_classifier
from .models import ArchSpec, get_preset
from .trainers import OptimizerConfig, TrainConfig, train

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"{where}.{key}: missing required field")
    return mapping[key]


def _typed(mapping: dict, key: str, types, where: str, default=None, required=False):
    if key not in mapping or mapping[key] is None:
        if required:
            raise ConfigError(f"{where}.{key}: missing required field")
        return default
    value = mapping[key]
    if not isinstance(value, types):
        raise ConfigError(f"{where}.{key}: expected {types}, got {type(value).__name__}")
    return value


@dataclass
class ExperimentConfig:
    """Validated, fully-serializable description of one experiment."""

    run_id: str
    seed: int
    dataset_source: str
    subsample: int | None
    resize: tuple | None
    grayscale: bool
    train_fraction: float
    split_seed: int
    trainer_kind: str
    generator: ArchSpec
    discriminator: ArchSpec
    adversary: ArchSpec | None
    batch_size: int
    k: int | None
    lambda_mi: float
    epochs: int
    eval_every: int
    optimizer: OptimizerConfig
    trainer_seed: int
    attack_bins: int
    blackbox_enabled: bool
    blackbox_epochs: int
    blackbox_batch_size: int
    blackbox_n_synthetic: int | None
    eval_enabled: bool
    classifier_preset: str
    classifier_epochs: int
    eval_n_samples: int
    memorization_samples: int
    eval_seed: int
    output_dir: Path
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_yaml(cls, path: Path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"config is not valid YAML: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a mapping at the top level")
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        version = _typed(raw, "schema_version", int, "config", default=SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: unsupported version {version}")
        run_id = _typed(raw, "run_id", str, "config", required=True)
        seed = _typed(raw, "seed", int, "config", default=0)

        ds = _typed(raw, "dataset", dict, "config", required=True)
        source = _typed(ds, "source", str, "dataset", required=True)
        subsample_n = _typed(ds, "subsample", int, "dataset")
        resize = _typed(ds, "resize", (list, tuple), "dataset")
        if resize is not None:
            if len(resize) != 2:
                raise ConfigError("dataset.resize: expected [height, width]")
            resize = (int(resize[0]), int(resize[1]))
        grayscale = _typed(ds, "grayscale", bool, "dataset", default=False)

        sp = _typed(raw, "split", dict, "config", required=True)
        fraction = float(_typed(sp, "train_fraction", (int, float), "split", required=True))
        if not 0.0 < fraction < 1.0:
            raise ConfigError(f"split.train_fraction: must lie in (0, 1), got {fraction}")
        split_seed = _typed(sp, "seed", int, "split", default=seed)

        model = _typed(raw, "model", dict, "config", required=True)

        def preset(key, required=False):
            name = _typed(model, key, str, "model", required=required)
            if name is None:
                return None
            try:
                return get_preset(name)
            except ValueError as exc:
                raise ConfigError(f"model.{key}: {exc}") from exc

        tr = _typed(raw, "trainer", dict, "config", required=True)
        kind = _typed(tr, "kind", str, "trainer", required=True)
        if kind not in ("gan", "megan", "mimgan"):
            raise ConfigError(f"trainer.kind: must be gan, megan, or mimgan, got {kind!r}")

        generator = preset("generator", required=True)
        discriminator = preset("discriminator", required=True)
        adversary = preset("adversary", required=(kind == "mimgan"))
        if kind == "mimgan" and adversary is None:
            raise ConfigError("model.adversary: required when trainer.kind is mimgan")

        batch_size = _typed(tr, "batch_size", int, "trainer", default=32)
        k = _typed(tr, "k", int, "trainer")
        lambda_mi = float(_typed(tr, "lambda", (int, float), "trainer", default=0.0))
        epochs = _typed(tr, "epochs", int, "trainer", required=True)
        eval_every = _typed(tr, "eval_every", int, "trainer", default=10)
        trainer_seed = _typed(tr, "seed", int, "trainer", default=seed)
        opt_raw = _typed(tr, "optimizer", dict, "trainer", default={})
        optimizer = OptimizerConfig(
            name=_typed(opt_raw, "name", str, "trainer.optimizer", default="adam"),
            lr=float(_typed(opt_raw, "lr", (int, float), "trainer.optimizer", default=2e-4)),
            beta1=float(_typed(opt_raw, "beta1", (int, float), "trainer.optimizer", default=0.5)),
            momentum=float(_typed(opt_raw, "momentum", (int, float), "trainer.optimizer", default=0.0)),
        )

        at = _typed(raw, "attack", dict, "config", default={})
        attack_bins = _typed(at, "bins", int, "attack", default=100)
        bb = _typed(at, "blackbox", dict, "attack", default={})
        blackbox_enabled = _typed(bb, "enabled", bool, "attack.blackbox", default=False)
        blackbox_epochs = _typed(bb, "epochs", int, "attack.blackbox", default=20)
        blackbox_batch = _typed(bb, "batch_size", int, "attack.blackbox", default=32)
        blackbox_n = _typed(bb, "n_synthetic", int, "attack.blackbox")

        ev = _typed(raw, "evaluation", dict, "config", default={})
        eval_enabled = _typed(ev, "enabled", bool, "evaluation", default=False)
        classifier_preset = _typed(ev, "classifier", str, "evaluation", default="appendix4-classifier")
        classifier_epochs = _typed(ev, "classifier_epochs", int, "evaluation", default=10)
        eval_n_samples = _typed(ev, "n_samples", int, "evaluation", default=10000)
        memorization_samples = _typed(ev, "memorization_samples", int, "evaluation", default=2000)
        eval_seed = _typed(ev, "seed", int, "evaluation", default=seed)

        output_dir = Path(_typed(raw, "output_dir", str, "config", default="runs"))

        return cls(
            run_id=run_id,
            seed=seed,
            dataset_source=source,
            subsample=subsample_n,
            resize=resize,
            grayscale=grayscale,
            train_fraction=fraction,
            split_seed=split_seed,
            trainer_kind=kind,
            generator=generator,
            discriminator=discriminator,
            adversary=adversary,
            batch_size=batch_size,
            k=k,
            lambda_mi=lambda_mi,
            epochs=epochs,
            eval_every=eval_every,
            optimizer=optimizer,
            trainer_seed=trainer_seed,
            attack_bins=attack_bins,
            blackbox_enabled=blackbox_enabled,
            blackbox_epochs=blackbox_epochs,
            blackbox_batch_size=blackbox_batch,
            blackbox_n_synthetic=blackbox_n,
            eval_enabled=eval_enabled,
            classifier_preset=classifier_preset,
            classifier_epochs=classifier_epochs,
            eval_n_samples=eval_n_samples,
            memorization_samples=memorization_samples,
            eval_seed=eval_seed,
            output_dir=output_dir,
            raw=raw,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            trainer=self.trainer_kind,
            generator=self.generator,
            discriminator=self.discriminator,
            adversary=self.adversary,
            batch_size=self.batch_size,
            k=self.k,
            lambda_mi=self.lambda_mi,
            epochs=self.epochs,
            optimizer=self.optimizer,
            eval_every=self.eval_every,
            seed=self.trainer_seed,
        )

    def fingerprint(self) -> dict:
        """Stable summary of everything that determines the run's outputs."""

        return {
            "schema_version": SCHEMA_VERSION,
            "run_id": self.run_id,
            "seed": self.seed,
            "dataset": {
                "source": self.dataset_source,
                "subsample": self.subsample,
                "resize": list(self.resize) if self.resize else None,
                "grayscale": self.grayscale,
            },
            "split": {"train_fraction": self.train_fraction, "seed": self.split_seed},
            "trainer": {
                "kind": self.trainer_kind,
                "batch_size": self.batch_size,
                "k": self.k,
                "lambda": self.lambda_mi,
                "epochs": self.epochs,
                "seed": self.trainer_seed,
                "optimizer": {
                    "name": self.optimizer.name,
                    "lr": self.optimizer.lr,
                    "beta1": self.optimizer.beta1,
                },
                "generator": self.generator.preset_name,
                "discriminator": self.discriminator.preset_name,
                "adversary": self.adversary.preset_name if self.adversary else None,
            },
            "attack": {
                "bins": self.attack_bins,
                # the TVD attack is realized with the shared equal-width
                # score histogram; flagged here since the estimator is a
                # toolkit choice
                "tvd_estimator": f"equal-width-histogram-{self.attack_bins}",
                "blackbox": self.blackbox_enabled,
                "blackbox_epochs": self.blackbox_epochs,
            },
            "evaluation": {
                "enabled": self.eval_enabled,
                "classifier": self.classifier_preset,
                "classifier_epochs": self.classifier_epochs,
                "n_samples": self.eval_n_samples,
                "memorization_samples": self.memorization_samples,
                "seed": self.eval_seed,
                "labeling": "oracle classifier trained on the full labeled corpus",
            },
        }


def run_experiment(config_path: Path, output_dir: Path | None = None, force: bool = False) -> Path:
    """Execute one experiment end to end; returns the run directory."""

    config = ExperimentConfig.from_yaml(config_path)
    base = Path(output_dir) if output_dir is not None else config.output_dir
    run_dir = base / config.run_id
    if run_dir.exists():
        if not force:
            raise ConfigError(f"run directory {run_dir} already exists (use force to overwrite)")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    started = time.time()
    shutil.copyfile(config_path, run_dir / "config.yaml")

    dataset = data_mod.load_dataset(
        config.dataset_source, resize=config.resize, grayscale=config.grayscale
    )
    if config.subsample:
        dataset = data_mod.subsample(dataset, config.subsample)
    split = data_mod.make_split(dataset, config.train_fraction, config.split_seed)
    pool = data_mod.build_attack_pool(dataset, split)

    bundle = train(config.train_config(), dataset, split, checkpoint_dir=run_dir / "checkpoints")
    bundle.history_csv(run_dir / "history.csv")
    bundle.snapshots_csv(run_dir / "scores.csv")

    aux_config = None
    if config.blackbox_enabled:
        aux_config = TrainConfig(
            trainer="gan",
            generator=config.generator,
            discriminator=config.discriminator,
            batch_size=config.blackbox_batch_size,
            epochs=config.blackbox_epochs,
            optimizer=config.optimizer,
            eval_every=max(1, config.blackbox_epochs),
            seed=config.trainer_seed + 1,
        )

    assets = EvalAssets(
        aux_attack_config=aux_config,
        n_samples=config.eval_n_samples,
        n_memorization=config.memorization_samples,
        bins=config.attack_bins,
        classifier_epochs=config.classifier_epochs,
        seed=config.eval_seed,
    )
    if config.eval_enabled:
        if dataset.labels is None:
            raise ConfigError("evaluation.enabled: dataset has no labels")
        preset = get_preset(config.classifier_preset)
        assets.classifier_preset = preset
        assets.oracle = train_classifier(
            dataset, np.arange(len(dataset)), preset,
            seed=config.eval_seed, epochs=config.classifier_epochs,
        )
        assets.eval_classifier = train_classifier(
            dataset, split.train_idx, preset,
            seed=config.eval_seed + 1, epochs=config.classifier_epochs,
        )
        assets.real_test = data_mod.LabeledDataset(
            images=dataset.images[split.holdout_idx],
            labels=dataset.labels[split.holdout_idx],
            name=f"{dataset.name}-holdout",
        )

    report = privacy_utility_report(bundle, pool, assets, run_id=config.run_id)
    report.config_fingerprint = config.fingerprint()
    report.save(run_dir / "report.json")

    (run_dir / "run_meta.json").write_text(
        json.dumps(
            {
                "started_unix": started,
                "finished_unix": time.time(),
                "platform": platform.platform(),
                "python": platform.python_version(),
            },
            sort_keys=True,
            indent=2,
        )
        + "\n"
    )

    emit_plots(run_dir)
    return run_dir


# --------------------------------------------------------------------------
# Plotting and cross-run comparison.
# --------------------------------------------------------------------------


def _read_history(run_dir: Path) -> list[dict]:
    import csv as _csv

    path = run_dir / "history.csv"
    if not path.exists():
        raise DataError(f"{run_dir}: no history.csv")
    with open(path, newline="") as f:
        rows = list(_csv.DictReader(f))
    if not rows:
        raise DataError(f"{run_dir}: history.csv is empty")
    return rows


def _read_scores(run_dir: Path) -> dict:
    import csv as _csv

    path = run_dir / "scores.csv"
    if not path.exists():
        raise DataError(f"{run_dir}: no scores.csv")
    snapshots: dict[int, dict[str, list[float]]] = {}
    with open(path, newline="") as f:
        for row in _csv.DictReader(f):
            epoch = int(row["epoch"])
            snapshots.setdefault(epoch, {}).setdefault(row["tag"], []).append(float(row["score"]))
    return snapshots


def emit_plots(run_dir: Path) -> list[Path]:
    """Write score-density overlays per checkpoint plus loss curves.

    When ``run_dir`` is not itself a run but contains run directories with
    differing lambda values, lambda-sweep curves (rho and MIA accuracy versus
    lambda) are written instead.
    """

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = Path(run_dir)
    if not (run_dir / "history.csv").exists():
        children = sorted(p for p in run_dir.iterdir() if (p / "report.json").exists()) if run_dir.is_dir() else []
        if not children:
            raise DataError(f"{run_dir}: no history.csv and no child run directories")
        return _lambda_sweep_plots(run_dir, children, plt)

    rows = _read_history(run_dir)
    out: list[Path] = []

    fig, ax = plt.subplots(figsize=(7, 4))
    epochs = [int(r["epoch"]) for r in rows]
    ax.plot(epochs, [float(r["d_loss"]) for r in rows], label="discriminator")
    ax.plot(epochs, [float(r["g_loss"]) for r in rows], label="generator")
    if any(r.get("a_loss") for r in rows):
        ax.plot(epochs, [float(r["a_loss"]) for r in rows if r["a_loss"]], label="adversary")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    path = run_dir / "losses.png"
    fig.savefig(path)
    plt.close(fig)
    out.append(path)

    for epoch, tags in sorted(_read_scores(run_dir).items()):
        fig, ax = plt.subplots(figsize=(6, 4))
        for tag, scores in sorted(tags.items()):
            ax.hist(scores, bins=50, range=(0, 1), density=True, alpha=0.5, label=tag)
        ax.set_xlabel("discriminator score")
        ax.set_ylabel("density")
        ax.set_title(f"epoch {epoch}")
        ax.legend()
        fig.tight_layout()
        path = run_dir / f"scores_epoch{epoch:04d}.png"
        fig.savefig(path)
        plt.close(fig)
        out.append(path)
    return out


def _lambda_sweep_plots(parent: Path, children: list[Path], plt) -> list[Path]:
    points = []
    for child in children:
        report = MetricsReport.load(child / "report.json")
        lam = report.config_fingerprint.get("trainer", {}).get("lambda")
        if lam is not None:
            points.append((float(lam), report.rho_tr_te, report.mia_whitebox))
    lambdas = sorted({p[0] for p in points})
    if len(lambdas) < 2:
        raise DataError(f"{parent}: need at least two distinct lambda values for sweep plots")
    points.sort()
    out = []
    for idx, (label, fname) in enumerate(
        [("Bhattacharyya coefficient (train vs holdout)", "rho_vs_lambda.png"),
         ("white-box MIA accuracy", "mia_vs_lambda.png")]
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot([p[0] for p in points], [p[1 + idx] for p in points], marker="o")
        ax.set_xlabel("lambda")
        ax.set_ylabel(label)
        fig.tight_layout()
        path = parent / fname
        fig.savefig(path)
        plt.close(fig)
        out.append(path)
    return out


COMPARISON_COLUMNS = (
    "run_id",
    "model",
    "lambda",
    "gap",
    "rho_tr_te",
    "mia_whitebox",
    "memorization",
    "tvd",
    "gan_test",
    "gan_train",
)


def compare_runs(run_dirs: list[Path], out_dir: Path) -> Path:
    """Aggregate run reports into one CSV row per run, plus a privacy-utility
    scatter (MIA accuracy versus GAN-test) when several runs carry both."""

    import csv as _csv

    if not run_dirs:
        raise DataError("compare_runs needs at least one run directory")
    reports = []
    for run_dir in run_dirs:
        path = Path(run_dir) / "report.json"
        if not path.exists():
            raise DataError(f"{run_dir}: no report.json")
        reports.append(MetricsReport.load(path))
    seen: dict[str, int] = {}
    for r in reports:
        if r.run_id in seen:
            raise DataError(f"duplicate run_id {r.run_id!r} in comparison inputs")
        seen[r.run_id] = 1

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "comparison.csv"
    with open(csv_path, "w", newline="") as f:
        writer = _csv.DictWriter(f, fieldnames=COMPARISON_COLUMNS)
        writer.writeheader()
        for r in reports:
            tr = r.config_fingerprint.get("trainer", {})
            writer.writerow(
                {
                    "run_id": r.run_id,
                    "model": tr.get("kind", ""),
                    "lambda": tr.get("lambda", ""),
                    "gap": r.gap,
                    "rho_tr_te": r.rho_tr_te,
                    "mia_whitebox": r.mia_whitebox,
                    "memorization": r.memorization,
                    "tvd": r.tvd,
                    "gan_test": "" if r.gan_test is None else r.gan_test,
                    "gan_train": "" if r.gan_train is None else r.gan_train,
                }
            )

    with_utility = [r for r in reports if r.gan_test is not None]
    if len(with_utility) > 1:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(6, 4))
        for r in with_utility:
            ax.scatter(r.mia_whitebox, r.gan_test)
            ax.annotate(r.run_id, (r.mia_whitebox, r.gan_test), fontsize=8)
        ax.set_xlabel("white-box MIA accuracy")
        ax.set_ylabel("GAN-test accuracy")
        fig.tight_layout()
        fig.savefig(out_dir / "privacy_utility.png")
        plt.close(fig)
    return csv_path
