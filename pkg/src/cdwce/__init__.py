"""Class distance weighted cross-entropy for ordinal classification.

Losses (CE, CDW-CE, CORN), a numpy MLP trained with Adam, ordinal metrics,
group-aware splitting and a cross-validation harness.
"""

from cdwce.data import Dataset, SyntheticConfig, generate_synthetic, group_holdout_split, group_kfold
from cdwce.harness import ExperimentConfig, ExperimentReport, best_power, power_sweep, run_cross_validation
from cdwce.losses import LossResult, batch_reduce, cdw_ce_loss, ce_loss, corn_loss, corn_predict
from cdwce.metrics import MetricSummary, confusion_matrix, qwk, summary_metrics
from cdwce.model import MlpModel, TrainConfig, fit, mlp_init, predict_labels
from cdwce.numeric import InvalidInputError

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "ExperimentConfig",
    "ExperimentReport",
    "InvalidInputError",
    "LossResult",
    "MetricSummary",
    "MlpModel",
    "SyntheticConfig",
    "TrainConfig",
    "batch_reduce",
    "best_power",
    "cdw_ce_loss",
    "ce_loss",
    "confusion_matrix",
    "corn_loss",
    "corn_predict",
    "fit",
    "generate_synthetic",
    "group_holdout_split",
    "group_kfold",
    "mlp_init",
    "power_sweep",
    "predict_labels",
    "qwk",
    "run_cross_validation",
    "summary_metrics",
]
