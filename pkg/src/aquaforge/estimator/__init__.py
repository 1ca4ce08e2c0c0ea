from ..losses import Prediction
from .arch import HEADS, ArchConfig, ModelParams, init, layout, param_count
from .checkpoint import CheckpointError, load, save
from .network import batch_loss, forward, forward_backward

__all__ = [
    "HEADS",
    "ArchConfig",
    "CheckpointError",
    "ModelParams",
    "Prediction",
    "batch_loss",
    "forward",
    "forward_backward",
    "init",
    "layout",
    "load",
    "param_count",
    "save",
]
