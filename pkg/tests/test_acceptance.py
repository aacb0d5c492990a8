"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The trend criteria (7-9) execute the shipped desk-scale configs end to end
through the experiment runner, so they exercise the whole artifact.  Run with
``pytest tests/test_acceptance.py -v -s`` to watch the per-criterion lines;
the full suite takes roughly 1.5 h of single-core CPU, dominated by the
criterion-7/8 training budgets.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
import torch
from scipy.integrate import quad
from scipy.stats import norm

from conftest import (
    finite_difference_grad,
    flat_grad,
    gradient_relative_error,
    toy_adversary_spec,
    toy_discriminator_spec,
    toy_generator_spec,
)
from ganprivacy.attacks import dmia_whitebox, tvd_attack
from ganprivacy.data import AttackPool, load_dataset
from ganprivacy.evaluation import MetricsReport, gan_test, train_classifier
from ganprivacy.experiment import run_experiment
from ganprivacy.metrics import (
    ScoreSet,
    TAG_HOLDOUT,
    TAG_TRAIN,
    bhattacharyya_gaussian,
    bhattacharyya_hist,
    estimate_densities,
    memorization_ratio,
    mia_error_bounds,
)
from ganprivacy.models import build_network, get_preset, load_checkpoint, replay_generator
from ganprivacy.trainers import (
    gaussian_nll,
    generator_loss_entropy,
    generator_loss_mimgan,
    generator_loss_nonsaturating,
)
from ganprivacy.models import split_adversary_output

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs" / "digits"


def criterion(num: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"[ACCEPTANCE] criterion {num:02d} {name}: {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


# -------------------------------------------------------------------------
# Shared end-to-end runs for the trend criteria.
# -------------------------------------------------------------------------


@pytest.fixture(scope="session")
def run_root(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance-runs")


def _run_config(name: str, run_root: Path) -> Path:
    return run_experiment(CONFIG_DIR / f"{name}.yaml", output_dir=run_root, force=True)


@pytest.fixture(scope="session")
def table1_reports(run_root):
    dirs = {
        key: _run_config(f"table1-{key}", run_root)
        for key in ("very-strong", "strong", "mild")
    }
    return {key: MetricsReport.load(d / "report.json") for key, d in dirs.items()}


@pytest.fixture(scope="session")
def table2_runs(run_root):
    return {
        key: _run_config(f"table2-{key}", run_root)
        for key in ("gan", "megan", "mimgan-l10", "mimgan-l100")
    }


@pytest.fixture(scope="session")
def table2_reports(table2_runs):
    return {key: MetricsReport.load(d / "report.json") for key, d in table2_runs.items()}


def test_criterion_01_closed_form_rho_vs_numerical_oracle():
    start = time.time()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(50):
        mu0, mu1 = rng.uniform(-1.5, 1.5, size=2)
        var0, var1 = rng.uniform(0.05, 2.0, size=2)
        closed = bhattacharyya_gaussian(mu0, var0, mu1, var1)
        numeric, _ = quad(
            lambda s: math.sqrt(
                norm.pdf(s, mu0, math.sqrt(var0)) * norm.pdf(s, mu1, math.sqrt(var1))
            ),
            -20.0,
            20.0,
            limit=200,
        )
        worst = max(worst, abs(closed - numeric))
    elapsed = time.time() - start
    criterion(
        1,
        "closed-form rho vs numerical integration",
        worst < 1e-4 and elapsed < 10.0,
        f"(max |diff|={worst:.2e}, {elapsed:.1f}s)",
    )


def test_criterion_02_bayes_error_bracketing():
    start = time.time()
    rng = np.random.default_rng(202)
    violations = 0
    for _ in range(1000):
        bins = rng.integers(2, 200)
        p0 = rng.random(bins)
        p1 = rng.random(bins)
        p0 /= p0.sum()
        p1 /= p1.sum()
        pi1 = rng.uniform(0.01, 0.99)
        pi0 = 1.0 - pi1
        bayes = np.minimum(pi0 * p0, pi1 * p1).sum()
        rho = np.sqrt(p0 * p1).sum()
        lower, upper = mia_error_bounds(min(rho, 1.0), pi0, pi1)
        if not (lower - 1e-12 <= bayes <= upper + 1e-12):
            violations += 1
    elapsed = time.time() - start
    criterion(
        2,
        "Bayes error bracketed by the rho bounds",
        violations == 0 and elapsed < 30.0,
        f"({violations} violations in 1000 trials, {elapsed:.1f}s)",
    )


class _FixedScores:
    def __init__(self, scores):
        self.scores = np.asarray(scores, dtype=np.float64)

    def predict(self, x):
        return self.scores[: len(x)]


def test_criterion_03_attack_sanity():
    membership = np.zeros(100, dtype=bool)
    membership[:10] = True
    pool = AttackPool(
        samples=np.zeros((100, 2, 2, 1), dtype=np.float32), membership=membership, n_train=10
    )

    clean = np.where(membership, 0.9, 0.1)
    perfect = dmia_whitebox(_FixedScores(clean), pool).accuracy

    tied = _FixedScores(np.full(100, 0.5))
    accs = [
        dmia_whitebox(tied, pool, tie_break="random", seed=trial).accuracy
        for trial in range(1000)
    ]
    mean_gap = abs(float(np.mean(accs)) - pool.prior)
    criterion(
        3,
        "white-box attack sanity",
        perfect == 1.0 and mean_gap < 0.03,
        f"(clean separation acc={perfect}, |mean-prior|={mean_gap:.4f})",
    )


def test_criterion_04_estimator_consistency():
    rng = np.random.default_rng(404)
    n = 100_000
    a = np.clip(rng.normal(0.3, 0.05, size=n), 0.0, 1.0)
    b = np.clip(rng.normal(0.7, 0.05, size=n), 0.0, 1.0)
    scores = ScoreSet(
        scores=np.concatenate([a, b]),
        tags=np.array([TAG_TRAIN] * n + [TAG_HOLDOUT] * n, dtype=object),
    )
    pair = estimate_densities(scores, TAG_TRAIN, TAG_HOLDOUT, bins=100)
    rho_hat = bhattacharyya_hist(pair)
    closed = bhattacharyya_gaussian(0.3, 0.05**2, 0.7, 0.05**2)
    rho_err = abs(rho_hat - closed)

    same = rng.random(4096)
    identical = ScoreSet(
        scores=np.concatenate([same, same]),
        tags=np.array([TAG_TRAIN] * len(same) + [TAG_HOLDOUT] * len(same), dtype=object),
    )
    tvd_same = tvd_attack(identical)

    disjoint = ScoreSet(
        scores=np.concatenate([np.full(n, 0.1), np.full(n, 0.9)]),
        tags=np.array([TAG_TRAIN] * n + [TAG_HOLDOUT] * n, dtype=object),
    )
    tvd_disjoint = tvd_attack(disjoint)

    criterion(
        4,
        "histogram estimators consistent",
        rho_err < 0.02 and tvd_same == 0.0 and tvd_disjoint == 1.0,
        f"(|rho_hat-closed|={rho_err:.4f}, tvd_same={tvd_same}, tvd_disjoint={tvd_disjoint})",
    )


def test_criterion_05_gradient_checks():
    start = time.time()
    torch.manual_seed(0)
    gen = build_network(toy_generator_spec(), 1)
    disc = build_network(toy_discriminator_spec(), 2)
    adv = build_network(toy_adversary_spec(), 3)
    for net in (gen, disc, adv):
        net.module.double()
        net.module.eval()
        with torch.no_grad():
            for p in net.module.parameters():
                p.mul_(40.0)  # fresh inits sit where the entropy gradient vanishes
    z = torch.randn(8, 3, dtype=torch.float64, generator=torch.Generator().manual_seed(4))
    x = torch.rand(8, 1, 2, 2, dtype=torch.float64, generator=torch.Generator().manual_seed(5))
    params = list(gen.module.parameters())

    def gan_loss():
        return generator_loss_nonsaturating(disc.module(gen.module(z)).squeeze(1))

    def megan_loss():
        return generator_loss_entropy(disc.module(gen.module(z)).squeeze(1))

    def mimgan_loss():
        fake = gen.module(z)
        out = split_adversary_output(adv.module(fake))
        return generator_loss_mimgan(
            disc.module(fake).squeeze(1), gaussian_nll(x.flatten(1), out), 7.5
        )

    errors = {}
    for name, loss_fn in (("gan", gan_loss), ("megan", megan_loss), ("mimgan", mimgan_loss)):
        analytic = flat_grad(loss_fn(), params)
        numeric = finite_difference_grad(loss_fn, params)
        errors[name] = gradient_relative_error(analytic, numeric)
    elapsed = time.time() - start
    criterion(
        5,
        "analytic gradients match finite differences",
        all(e < 1e-4 for e in errors.values()) and elapsed < 60.0,
        f"(rel errors {errors}, {elapsed:.1f}s)",
    )


def test_criterion_06_memorization_metric():
    rng = np.random.default_rng(606)
    train = rng.random((30, 8))
    test = rng.random((12, 8))
    exact_one = memorization_ratio(train, test, test.copy())
    sentinel = memorization_ratio(train, test, train[:7])
    criterion(
        6,
        "memorization ratio exact cases",
        exact_one == 1.0 and sentinel == math.inf,
        f"(generated==test -> {exact_one}, generated subset of train -> {sentinel})",
    )


def test_criterion_07_table1_trend(table1_reports):
    r = table1_reports
    mia = [r["very-strong"].mia_whitebox, r["strong"].mia_whitebox, r["mild"].mia_whitebox]
    tvd = [r["very-strong"].tvd, r["strong"].tvd, r["mild"].tvd]
    rho = [r["very-strong"].rho_tr_te, r["strong"].rho_tr_te, r["mild"].rho_tr_te]
    prior = r["very-strong"].prior

    mia_ordered = mia[0] > mia[1] > mia[2]
    tvd_ordered = tvd[0] > tvd[1] > tvd[2]
    rho_ordered = rho[0] < rho[1] < rho[2]
    strong_enough = mia[0] >= 2.0 * prior
    criterion(
        7,
        "Table-I trend (very strong > strong > mild)",
        mia_ordered and tvd_ordered and rho_ordered and strong_enough,
        f"(MIA={[f'{v:.3f}' for v in mia]}, TVD={[f'{v:.3f}' for v in tvd]}, "
        f"rho={[f'{v:.3f}' for v in rho]}, prior={prior:.3f})",
    )


def test_criterion_08_table2_trend(table2_reports):
    megan = table2_reports["megan"]
    m10 = table2_reports["mimgan-l10"]
    m100 = table2_reports["mimgan-l100"]

    megan_ok = abs(megan.mia_whitebox - megan.prior) <= 0.05 and megan.rho_tr_te >= 0.95

    inversions = []
    if m100.rho_tr_te < m10.rho_tr_te:
        inversions.append(m10.rho_tr_te - m100.rho_tr_te)
    if m100.mia_whitebox > m10.mia_whitebox:
        inversions.append(m100.mia_whitebox - m10.mia_whitebox)
    mimgan_ok = len(inversions) == 0 or (len(inversions) == 1 and inversions[0] <= 0.01)

    criterion(
        8,
        "Table-II trend (MEGAN near prior; MIMGAN monotone in lambda)",
        megan_ok and mimgan_ok,
        f"(MEGAN MIA={megan.mia_whitebox:.3f} prior={megan.prior:.3f} rho={megan.rho_tr_te:.3f}; "
        f"MIMGAN rho {m10.rho_tr_te:.3f}->{m100.rho_tr_te:.3f}, "
        f"MIA {m10.mia_whitebox:.3f}->{m100.mia_whitebox:.3f})",
    )


def _final_generator(run_dir: Path):
    paths = sorted((run_dir / "checkpoints").glob("generator_epoch*.gpck"))
    return load_checkpoint(paths[-1])


def test_criterion_09_utility_floor(table2_runs):
    digits = load_dataset("digits")
    preset = get_preset("desk-classifier")
    oracle = train_classifier(digits, np.arange(len(digits)), preset, seed=0, epochs=25)
    half = np.arange(len(digits))[: len(digits) // 2]
    eval_clf = train_classifier(digits, half, preset, seed=1, epochs=25)

    gan_gen = _final_generator(table2_runs["gan"])
    megan_gen = _final_generator(table2_runs["megan"])
    noise_bank = np.random.default_rng(909).random((512, 28, 28, 1)).astype(np.float32)
    noise_gen = replay_generator(noise_bank)

    gt = {
        name: gan_test(eval_clf, oracle, gen, n_samples=2000, seed=7)
        for name, gen in (("gan", gan_gen), ("megan", megan_gen), ("noise", noise_gen))
    }
    ok = (
        gt["gan"] >= gt["megan"] - 0.05
        and gt["gan"] >= gt["noise"] + 0.20
        and gt["megan"] >= gt["noise"] + 0.20
    )
    criterion(9, "utility floor (GAN-test ordering)", ok, f"(GAN-test {gt})")


def test_criterion_10_end_to_end_determinism(run_root):
    config = CONFIG_DIR / "smoke.yaml"
    a = run_experiment(config, output_dir=run_root / "det-a", force=True)
    b = run_experiment(config, output_dir=run_root / "det-b", force=True)
    identical = (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    criterion(
        10,
        "preset config twice gives identical report JSON",
        identical,
        f"({a / 'report.json'} vs {b / 'report.json'})",
    )
