"""Adversary-side procedures: discriminator-score membership inference
(white-box and black-box) and the total-variation-distance attack.

The white-box attacker knows the training-set size n, scores every pool
sample with the target discriminator, and predicts the n highest-scoring
samples as members.  The black-box variant first distills an auxiliary GAN
from the target generator's synthetic output and attacks with the auxiliary
discriminator instead.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import AttackPool, LabeledDataset, SplitIndices
from .metrics import ScoreSet, TAG_HOLDOUT, TAG_TRAIN, estimate_densities, score_set
from .models import Network
from .trainers import TrainConfig, train_gan

DEFAULT_ATTACK_BINS = 100


@dataclass
class AttackResult:
    predicted_members: np.ndarray  # indices into the pool, size n_train
    accuracy: float
    prior: float
    score_snapshot: ScoreSet
    fingerprint: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "predicted_members": [int(i) for i in self.predicted_members],
                "accuracy": self.accuracy,
                "prior": self.prior,
                "fingerprint": self.fingerprint,
            },
            sort_keys=True,
        )

    def save(self, path: Path) -> None:
        Path(path).write_text(self.to_json())


def _top_n(scores: np.ndarray, n: int, tie_break: str, seed) -> np.ndarray:
    """Indices of the n highest scores; ties by ascending index or at random."""

    if tie_break == "index":
        secondary = np.arange(len(scores))
    elif tie_break == "random":
        secondary = np.random.default_rng(seed).permutation(len(scores))
    else:
        raise ValueError(f"tie_break must be 'index' or 'random', got {tie_break!r}")
    order = np.lexsort((secondary, -scores))
    return order[:n]


def dmia_whitebox(
    discriminator: Network,
    pool: AttackPool,
    tie_break: str = "index",
    seed: int | None = None,
) -> AttackResult:
    """Predict the n_train highest-scoring pool samples as training members.

    Membership bits are read only to grade the final prediction.
    """

    if pool.n_train > len(pool):
        raise ValueError("n_train exceeds the pool size")
    snapshot = score_set(discriminator, pool)
    predicted = _top_n(snapshot.scores, pool.n_train, tie_break, seed)
    accuracy = float(pool.membership[predicted].mean())
    return AttackResult(
        predicted_members=np.sort(predicted),
        accuracy=accuracy,
        prior=pool.prior,
        score_snapshot=snapshot,
        fingerprint={"attack": "dmia_whitebox", "tie_break": tie_break, "seed": seed},
    )


def dmia_blackbox(
    generator: Network,
    pool: AttackPool,
    aux_config: TrainConfig,
    n_synthetic: int | None = None,
    sample_seed: int = 0,
) -> AttackResult:
    """Train an auxiliary GAN on the target generator's output, then attack
    with the auxiliary discriminator exactly as in the white-box case."""

    if aux_config.trainer != "gan":
        raise ValueError("the auxiliary model is a vanilla GAN; aux_config.trainer must be 'gan'")
    n = n_synthetic if n_synthetic is not None else pool.n_train
    synthetic = generator.generate(n, seed=sample_seed)
    lo, hi = generator.pixel_range
    if (lo, hi) != (0.0, 1.0):
        synthetic = (synthetic - lo) / (hi - lo)
    synthetic = np.clip(synthetic, 0.0, 1.0)

    aux_data = LabeledDataset(images=synthetic, labels=None, name="synthetic")
    aux_split = SplitIndices(
        train_idx=np.arange(n), holdout_idx=np.empty(0, dtype=np.int64), seed=aux_config.seed
    )
    aux = train_gan(aux_config, aux_data, aux_split)

    result = dmia_whitebox(aux.discriminator, pool)
    result.fingerprint = {
        "attack": "dmia_blackbox",
        "n_synthetic": n,
        "sample_seed": sample_seed,
        "aux_trainer": {
            "epochs": aux_config.epochs,
            "batch_size": aux_config.batch_size,
            "seed": aux_config.seed,
            "generator": aux_config.generator.preset_name,
            "discriminator": aux_config.discriminator.preset_name,
        },
    }
    return result


def tvd_attack(scores: ScoreSet, bins: int = DEFAULT_ATTACK_BINS) -> float:
    """Total variation distance between the train and holdout score densities."""

    pair = estimate_densities(scores, TAG_TRAIN, TAG_HOLDOUT, bins=bins)
    return float(0.5 * np.abs(pair.p1 - pair.p0).sum())
