from ..losses import (
    FINETUNE_WEIGHTS,
    PRETRAIN_WEIGHTS,
    LossTerms,
    LossWeights,
    loss_components,
    total_loss,
)
from .finetune import Adam, enhance, fine_tune, predict_padded
from .meta import MetaConfig, evaluate, inner_adapt, lr_at, meta_train, outer_update

__all__ = [
    "Adam",
    "FINETUNE_WEIGHTS",
    "LossTerms",
    "LossWeights",
    "MetaConfig",
    "PRETRAIN_WEIGHTS",
    "enhance",
    "evaluate",
    "fine_tune",
    "inner_adapt",
    "loss_components",
    "lr_at",
    "meta_train",
    "outer_update",
    "predict_padded",
    "total_loss",
]
