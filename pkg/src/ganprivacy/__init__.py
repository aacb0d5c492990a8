"""Train-attack-evaluate toolkit for privacy-preserving GANs."""

from .data import (
    AttackPool,
    DataError,
    LabeledDataset,
    SplitIndices,
    build_attack_pool,
    load_dataset,
    make_split,
    subsample,
)
from .metrics import (
    DensityPair,
    ScoreSet,
    bhattacharyya_gaussian,
    bhattacharyya_hist,
    binary_entropy,
    estimate_densities,
    fano_lower_bound,
    generalization_gap,
    memorization_ratio,
    mia_error_bounds,
    score_set,
)
from .models import (
    ArchSpec,
    Network,
    build_network,
    get_preset,
    load_checkpoint,
    preset_names,
    replay_generator,
    sample_latent,
    save_checkpoint,
)
from .trainers import (
    OptimizerConfig,
    TrainConfig,
    TrainedBundle,
    TrainingError,
    gaussian_nll,
    train,
    train_gan,
    train_megan,
    train_mimgan,
)
from .attacks import AttackResult, dmia_blackbox, dmia_whitebox, tvd_attack
from .evaluation import (
    Classifier,
    EvalAssets,
    MetricsReport,
    class_distribution,
    gan_test,
    gan_train,
    privacy_utility_report,
    train_classifier,
)
from .experiment import ConfigError, ExperimentConfig, compare_runs, emit_plots, run_experiment

__version__ = "0.1.0"
