"""Attribute judge, diagnosis model, debiasing strategies and fairness summaries."""
from .augment import AugmentConfig, augment_batch
from .ddm import (
    DdmCheckpoint,
    DdmHyper,
    MetricReport,
    ensemble_probabilities,
    evaluate_ddm,
    positive_weights,
    report_from_probabilities,
    snapshot_probabilities,
    train_ddm,
)
from .debias import TrainStrategy, balanced_indices, balanced_resample, mixup_batch
from .fairness import FairnessReport, subgroup_fairness, summarize_group_aucs, write_table4
from .judge import (
    JudgeCheckpoint,
    JudgeHyper,
    LEAKAGE_COLUMNS,
    evaluate_leakage,
    predict_proba,
    train_judge,
    write_leakage_csv,
)
from .networks import BACKBONES, SmallConvNet, build_backbone

__all__ = [
    "AugmentConfig",
    "BACKBONES",
    "DdmCheckpoint",
    "DdmHyper",
    "FairnessReport",
    "JudgeCheckpoint",
    "JudgeHyper",
    "LEAKAGE_COLUMNS",
    "MetricReport",
    "SmallConvNet",
    "TrainStrategy",
    "augment_batch",
    "balanced_indices",
    "balanced_resample",
    "build_backbone",
    "ensemble_probabilities",
    "evaluate_ddm",
    "evaluate_leakage",
    "mixup_batch",
    "positive_weights",
    "predict_proba",
    "report_from_probabilities",
    "snapshot_probabilities",
    "subgroup_fairness",
    "summarize_group_aucs",
    "train_ddm",
    "train_judge",
    "write_leakage_csv",
    "write_table4",
]
