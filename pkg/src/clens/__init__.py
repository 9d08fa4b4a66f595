"""clens: confusion-score analytics for ensembles of classifiers.

Computes per-sample entropy/confusion scores from per-epoch probability
logs, partitions datasets into confusion groups, and predicts OOD accuracy
from ID labels. Ships a FastAPI service plus a thin CLI client, and a
synthetic generate-and-train harness that serves as its own ground truth.
"""

__version__ = "0.1.0"

from .errors import ClensError, ConfigError, FormatError, ValidationError
from .manifest import Experiment, Manifest, read_manifest
from .partition import (
    BinPartition,
    bin_scores,
    correct_count_split,
    participation_ratios,
    per_bin_accuracy,
    subpop_accuracy,
)
from .phases import PhaseReport, detect_phases
from .predictor import (
    OodPrediction,
    predict_epoch_variant,
    predict_for_model,
    predict_ood_accuracy,
    prediction_report,
)
from .problog import MetricsSeries, ProbLog, read_cpl, read_labels, read_metrics, write_cpl
from .scoring import (
    ScoreTable,
    confusion_scores,
    ensemble_mean,
    ensemble_predict,
    entropy,
    entropy_scores_at,
    entropy_std,
    mean_entropy_trajectory,
    score_table,
)
from .synth import SynthConfig, SynthDataset, gen_colored_two_class, gen_mixture, resample_by_bins
from .trainer import ToyArch, TrainConfig, forward, init_model, train_ensemble, train_run

__all__ = [
    "__version__",
    "ClensError",
    "ConfigError",
    "FormatError",
    "ValidationError",
    "Experiment",
    "Manifest",
    "read_manifest",
    "BinPartition",
    "bin_scores",
    "correct_count_split",
    "participation_ratios",
    "per_bin_accuracy",
    "subpop_accuracy",
    "PhaseReport",
    "detect_phases",
    "OodPrediction",
    "predict_epoch_variant",
    "predict_for_model",
    "predict_ood_accuracy",
    "prediction_report",
    "MetricsSeries",
    "ProbLog",
    "read_cpl",
    "read_labels",
    "read_metrics",
    "write_cpl",
    "ScoreTable",
    "confusion_scores",
    "ensemble_mean",
    "ensemble_predict",
    "entropy",
    "entropy_scores_at",
    "entropy_std",
    "mean_entropy_trajectory",
    "score_table",
    "SynthConfig",
    "SynthDataset",
    "gen_colored_two_class",
    "gen_mixture",
    "resample_by_bins",
    "ToyArch",
    "TrainConfig",
    "forward",
    "init_model",
    "train_ensemble",
    "train_run",
]
