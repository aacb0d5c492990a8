"""Overfitting and memorization diagnostics computed from discriminator scores.

Everything here is a pure function of numpy arrays: score extraction,
generalization gap, histogram score densities, the Bhattacharyya coefficient
(empirical and Gaussian closed form), the induced bounds on the best possible
membership-inference error, a Fano-style entropy bound, and the
nearest-neighbor memorization ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

TAG_TRAIN = "train"
TAG_HOLDOUT = "holdout"
TAG_FAKE = "fake"
VALID_TAGS = (TAG_TRAIN, TAG_HOLDOUT, TAG_FAKE)

# Discriminator outputs are clamped this far away from {0, 1} before any log.
SCORE_EPS = 1e-7

DEFAULT_BINS = 100


@dataclass
class ScoreSet:
    """Discriminator scores for a tagged sample collection.

    ``scores`` lie in [0, 1]; ``tags`` label each score as train / holdout /
    fake.  Membership priors (pi1 = train, pi0 = non-train) are computed from
    the train/holdout tag counts; fake scores never enter the priors.
    """

    scores: np.ndarray
    tags: np.ndarray
    pi0: float = field(init=False)
    pi1: float = field(init=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.tags = np.asarray(self.tags, dtype=object)
        if self.scores.ndim != 1 or self.scores.shape != self.tags.shape:
            raise ValueError("scores and tags must be 1-D arrays of equal length")
        if self.scores.size == 0:
            raise ValueError("empty score set")
        if np.any(self.scores < 0.0) or np.any(self.scores > 1.0):
            raise ValueError("scores must lie in [0, 1]")
        bad = set(self.tags) - set(VALID_TAGS)
        if bad:
            raise ValueError(f"unknown tags: {sorted(bad)}")
        n_train = int(np.sum(self.tags == TAG_TRAIN))
        n_holdout = int(np.sum(self.tags == TAG_HOLDOUT))
        pool = n_train + n_holdout
        if pool > 0:
            self.pi1 = n_train / pool
            self.pi0 = n_holdout / pool
        else:
            self.pi1 = 0.0
            self.pi0 = 0.0

    def by_tag(self, tag: str) -> np.ndarray:
        if tag not in VALID_TAGS:
            raise ValueError(f"unknown tag {tag!r}")
        return self.scores[self.tags == tag]

    def has_tag(self, tag: str) -> bool:
        return bool(np.any(self.tags == tag))


@dataclass(frozen=True)
class DensityPair:
    """Two histogram densities over shared equal-width bins on [0, 1]."""

    bin_edges: np.ndarray
    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.bin_edges, dtype=np.float64)
        p0 = np.asarray(self.p0, dtype=np.float64)
        p1 = np.asarray(self.p1, dtype=np.float64)
        if edges.ndim != 1 or np.any(np.diff(edges) <= 0):
            raise ValueError("bin_edges must be strictly increasing")
        if len(edges) - 1 < 2:
            raise ValueError("need at least 2 bins")
        if p0.shape != p1.shape or p0.shape != (len(edges) - 1,):
            raise ValueError("histogram shape does not match bin_edges")
        if np.any(p0 < 0) or np.any(p1 < 0):
            raise ValueError("histogram masses must be nonnegative")
        for name, p in (("p0", p0), ("p1", p1)):
            if abs(p.sum() - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1 (got {p.sum()!r})")
        object.__setattr__(self, "bin_edges", edges)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)

    @property
    def bins(self) -> int:
        return len(self.bin_edges) - 1

    def to_csv(self, path) -> None:
        """Write (bin_left, bin_right, p0, p1) rows for external plotting."""

        import csv

        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["bin_left", "bin_right", "p0", "p1"])
            for i in range(self.bins):
                writer.writerow(
                    [
                        repr(float(self.bin_edges[i])),
                        repr(float(self.bin_edges[i + 1])),
                        repr(float(self.p0[i])),
                        repr(float(self.p1[i])),
                    ]
                )


def score_set(discriminator, pool, fake_samples=None) -> ScoreSet:
    """Score every pool sample (and optional fakes) with the discriminator.

    The discriminator runs in evaluation mode; tags come from the pool's
    membership bits, generated samples are tagged ``fake``.
    """

    scores = discriminator.predict(pool.samples)
    tags = np.where(pool.membership, TAG_TRAIN, TAG_HOLDOUT).astype(object)
    if fake_samples is not None and len(fake_samples):
        fake_scores = discriminator.predict(np.asarray(fake_samples))
        scores = np.concatenate([scores, fake_scores])
        tags = np.concatenate([tags, np.array([TAG_FAKE] * len(fake_scores), dtype=object)])
    return ScoreSet(scores=scores, tags=tags)


def generalization_gap(scores: ScoreSet, phi: str = "identity") -> float:
    """Mean phi(train score) minus mean phi(holdout score).

    ``phi`` is ``identity`` or ``log``; scores are eps-clamped before the log.
    """

    if phi not in ("identity", "log"):
        raise ValueError(f"phi must be 'identity' or 'log', got {phi!r}")
    for tag in (TAG_TRAIN, TAG_HOLDOUT):
        if not scores.has_tag(tag):
            raise ValueError(f"score set has no {tag!r} scores")
    tr = scores.by_tag(TAG_TRAIN)
    te = scores.by_tag(TAG_HOLDOUT)
    if phi == "log":
        tr = np.log(np.clip(tr, SCORE_EPS, 1.0))
        te = np.log(np.clip(te, SCORE_EPS, 1.0))
    return float(tr.mean() - te.mean())


def estimate_densities(
    scores: ScoreSet, class_a: str, class_b: str, bins: int = DEFAULT_BINS
) -> DensityPair:
    """Histogram the two score classes on shared equal-width bins over [0, 1]."""

    if bins < 2:
        raise ValueError("bins must be >= 2")
    sa = scores.by_tag(class_a)
    sb = scores.by_tag(class_b)
    if sa.size == 0:
        raise ValueError(f"no scores tagged {class_a!r}")
    if sb.size == 0:
        raise ValueError(f"no scores tagged {class_b!r}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    ca, _ = np.histogram(sa, bins=edges)
    cb, _ = np.histogram(sb, bins=edges)
    return DensityPair(bin_edges=edges, p0=ca / ca.sum(), p1=cb / cb.sum())


def bhattacharyya_hist(pair: DensityPair) -> float:
    """Empirical overlap coefficient: sum_i sqrt(p0_i * p1_i), in [0, 1]."""

    return float(np.sqrt(pair.p0 * pair.p1).sum())


def bhattacharyya_gaussian(mu0: float, var0: float, mu1: float, var1: float) -> float:
    """Closed-form overlap coefficient of two univariate Gaussians."""

    if var0 <= 0 or var1 <= 0:
        raise ValueError("variances must be positive")
    ratio = 0.25 * (var1 / var0 + var0 / var1 + 2.0)
    dist = 0.25 * math.log(ratio) + 0.25 * (mu0 - mu1) ** 2 / (var0 + var1)
    return math.exp(-dist)


def mia_error_bounds(rho: float, pi0: float, pi1: float) -> tuple[float, float]:
    """Bounds on the Bayes error of any score-based membership classifier.

    Returns ``(lower, upper)`` with
    lower = 1/2 - 1/2 sqrt(1 - 4 pi0 pi1 rho^2) and upper = sqrt(pi0 pi1) rho.
    """

    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    if pi0 < 0 or pi1 < 0 or abs(pi0 + pi1 - 1.0) > 1e-9:
        raise ValueError("priors must be nonnegative and sum to 1")
    inner = 1.0 - 4.0 * pi0 * pi1 * rho * rho
    lower = 0.5 - 0.5 * math.sqrt(max(inner, 0.0))
    upper = math.sqrt(pi0 * pi1) * rho
    return lower, upper


def binary_entropy(p):
    """Entropy of a Bernoulli(p) variable in nats, with 0 log 0 := 0.

    Accepts scalars or arrays; every entry must lie in [0, 1].
    """

    arr = np.asarray(p, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("p must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(arr > 0, arr * np.log(arr), 0.0) - np.where(
            arr < 1, (1.0 - arr) * np.log(1.0 - arr), 0.0
        )
    if np.isscalar(p) or getattr(p, "ndim", 1) == 0:
        return float(h)
    return h


def fano_lower_bound(scores: ScoreSet, log_base: str = "nats") -> float:
    """Entropy-based lower bound on the discriminator's classification error.

    With ``nats`` the mean score entropy is measured in nats and the bound is
    (mean - 1) / ln 2; with ``bits`` it is mean_bits - 1.  The value is a
    monitoring proxy and may be negative.
    """

    if log_base not in ("nats", "bits"):
        raise ValueError(f"log_base must be 'nats' or 'bits', got {log_base!r}")
    h = binary_entropy(scores.scores)
    mean_nats = float(np.mean(h))
    if log_base == "nats":
        return (mean_nats - 1.0) / math.log(2.0)
    return mean_nats / math.log(2.0) - 1.0


def _min_dists(queries: np.ndarray, train: np.ndarray) -> np.ndarray:
    """Exact nearest-neighbor Euclidean distance of each query to the train set."""

    q = np.asarray(queries, dtype=np.float64).reshape(len(queries), -1)
    t = np.asarray(train, dtype=np.float64).reshape(len(train), -1)
    if q.shape[1] != t.shape[1]:
        raise ValueError(f"dimension mismatch: {q.shape[1]} vs {t.shape[1]}")
    # chunk the queries so the distance matrix stays small
    out = np.empty(len(q))
    step = max(1, int(2e7) // max(len(t), 1))
    for i in range(0, len(q), step):
        out[i : i + step] = cdist(q[i : i + step], t).min(axis=1)
    return out


def memorization_ratio(train, test, generated, distance: str = "euclidean") -> float:
    """Nearest-neighbor memorization ratio.

    Mean test-to-train NN distance divided by mean generated-to-train NN
    distance; a value above 1 signals the generator sits closer to the train
    set than real unseen data does.  Returns ``inf`` when the generated
    samples reproduce train points exactly (zero denominator).
    """

    if distance != "euclidean":
        raise ValueError(f"unsupported distance {distance!r}")
    for name, arr in (("train", train), ("test", test), ("generated", generated)):
        if len(arr) == 0:
            raise ValueError(f"{name} set is empty")
    num = float(_min_dists(np.asarray(test), np.asarray(train)).mean())
    den = float(_min_dists(np.asarray(generated), np.asarray(train)).mean())
    if den == 0.0:
        return math.inf
    return num / den
