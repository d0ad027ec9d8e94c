"""Optimizer, augmentation, training regimes, inference, evaluation and ensembling."""

from pulseforge.pipeline.augment import AugmentFlags, augment_mstmap
from pulseforge.pipeline.infer import (
    EvalReport,
    HrPrediction,
    InferConfig,
    ensemble,
    evaluate,
    predict_hr,
    predict_many,
    rmse,
)
from pulseforge.pipeline.optim import AdamState, adamw_step
from pulseforge.pipeline.train import (
    ContrastConfig,
    TrainConfig,
    finetune_stencoder,
    finetune_stformer,
    pretrain_contrastive,
    pretrain_selfsup,
)

__all__ = [
    "AdamState",
    "AugmentFlags",
    "ContrastConfig",
    "EvalReport",
    "HrPrediction",
    "InferConfig",
    "TrainConfig",
    "adamw_step",
    "augment_mstmap",
    "ensemble",
    "evaluate",
    "finetune_stencoder",
    "finetune_stformer",
    "predict_hr",
    "predict_many",
    "pretrain_contrastive",
    "pretrain_selfsup",
    "rmse",
]
