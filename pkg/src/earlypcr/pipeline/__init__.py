"""Training orchestration, nested cross-validation, checkpoints and predictions."""

from .checkpoint import ModelBundle, load_bundle, save_bundle
from .config import ConfigError, ExperimentConfig, from_ini, load_config
from .experiment import (ExperimentResult, extract_t2_targets, predict_soft_vote, run_experiment,
                         soft_vote, train_stage1, train_stage2)
from .modes import MODE_SPECS, TABLE_MODES, Mode, parse_mode, spec_for
from .predictions import PredictionSet, parse_predictions, read_predictions

__all__ = [
    "ConfigError", "ExperimentConfig", "ExperimentResult", "MODE_SPECS", "Mode", "ModelBundle",
    "PredictionSet", "TABLE_MODES", "extract_t2_targets", "from_ini", "load_bundle",
    "load_config", "parse_mode", "parse_predictions", "predict_soft_vote", "read_predictions",
    "run_experiment", "save_bundle", "soft_vote", "spec_for", "train_stage1", "train_stage2",
]
