"""Label-free out-of-distribution detection on frozen latent representations.

Two detectors over the same LTNT latent files: a global Mahalanobis fit and
a diffusion-observer typicality score (score norm over estimated score-field
divergence, turned into a KDE negative log likelihood). Plus the evaluation
metrics, the noise-scale sweep, and a prefix gatekeeper for streaming use.
"""

from .errors import (
    ArgumentError,
    ConditioningError,
    CorruptionError,
    DegenerateInputError,
    FormatError,
    InsufficientDataError,
    LatentOodError,
    NotPositiveDefiniteError,
    NumericError,
    ShapeError,
    TrainingError,
    ValidationError,
)
from .gatekeeper import GateConfig, GateTrace, calibrate_threshold, gate_sequence
from .latents import (
    LatentDataset,
    TokenSequence,
    prefix_smp_all,
    prefix_smp_pool,
    read_latents,
    read_latents_csv,
    smp_pool,
    write_latents,
)
from .mahalanobis import (
    ClassConditionalModel,
    MahalanobisModel,
    fit_class_conditional,
    fit_global,
    load_model,
    save_model,
    score_class_conditional,
    score_class_conditional_batch,
    score_global,
    score_global_batch,
)
from .metrics import MetricBundle, ScoredPair, au_pr, auroc, bootstrap_ci, bundle, dtacc, iqm
from .observer import (
    DiffusionObserver,
    Normalizer,
    TrainConfig,
    fit_normalizer,
    load_observer,
    save_observer,
    train_observer,
    untrained_observer,
)
from .sweep import SweepResult, default_grid, normalize_curve, run_sweep, select_sigma, write_csv
from .typicality import (
    KdeModel,
    TypicalityConfig,
    TypicalityScorer,
    fit_kde,
    fit_scorer,
    hutchinson_trace,
    load_scorer,
    rescoped_score,
    rescoped_score_batch,
    save_scorer,
    typicality_batch,
    typicality_statistic,
)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError",
    "ClassConditionalModel",
    "ConditioningError",
    "CorruptionError",
    "DegenerateInputError",
    "DiffusionObserver",
    "FormatError",
    "GateConfig",
    "GateTrace",
    "InsufficientDataError",
    "KdeModel",
    "LatentDataset",
    "LatentOodError",
    "MahalanobisModel",
    "MetricBundle",
    "Normalizer",
    "NotPositiveDefiniteError",
    "NumericError",
    "ScoredPair",
    "ShapeError",
    "SweepResult",
    "TokenSequence",
    "TrainConfig",
    "TrainingError",
    "TypicalityConfig",
    "TypicalityScorer",
    "ValidationError",
    "au_pr",
    "auroc",
    "bootstrap_ci",
    "bundle",
    "calibrate_threshold",
    "default_grid",
    "dtacc",
    "fit_class_conditional",
    "fit_global",
    "fit_kde",
    "fit_normalizer",
    "fit_scorer",
    "gate_sequence",
    "hutchinson_trace",
    "iqm",
    "load_model",
    "load_observer",
    "load_scorer",
    "prefix_smp_all",
    "prefix_smp_pool",
    "read_latents",
    "read_latents_csv",
    "rescoped_score",
    "rescoped_score_batch",
    "normalize_curve",
    "run_sweep",
    "write_csv",
    "save_model",
    "save_observer",
    "save_scorer",
    "score_class_conditional",
    "score_class_conditional_batch",
    "score_global",
    "score_global_batch",
    "select_sigma",
    "smp_pool",
    "train_observer",
    "typicality_batch",
    "typicality_statistic",
    "untrained_observer",
    "write_latents",
]
