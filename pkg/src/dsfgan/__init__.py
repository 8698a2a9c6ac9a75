"""Conditional tabular WGAN with an optional downstream-task feedback loss."""

from .exceptions import ConfigError, DataError, DSFGANError, FoldError, NonFiniteError
from .feedback import FeedbackConfig, FeedbackHook
from .gan import GanModel, TrainConfig
from .harness import efficacy_eval, format_table, run_experiment
from .metrics import confidence_interval, precision_recall, rmse_r2
from .synthesizer import DSFGAN
from .tabular import SchemaConfig, TableSchema, TabularEncoder, load_csv

__version__ = "0.1.0"

__all__ = [
    "DSFGAN", "TabularEncoder", "SchemaConfig", "TableSchema", "load_csv",
    "GanModel", "TrainConfig", "FeedbackConfig", "FeedbackHook",
    "run_experiment", "efficacy_eval", "format_table",
    "precision_recall", "rmse_r2", "confidence_interval",
    "DSFGANError", "ConfigError", "DataError", "NonFiniteError", "FoldError",
]
