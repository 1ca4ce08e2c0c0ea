"""Adam fine-tuning on paired data and single-image enhancement."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..core import DataError, Rng, as_image
from ..dataio import crop_example, minibatches
from ..estimator import ModelParams, forward, forward_backward
from ..losses import FINETUNE_WEIGHTS, LossWeights, Prediction
from .meta import MetaConfig, evaluate, lr_at

log = logging.getLogger(__name__)


@dataclass
class Adam:
    """Adaptive-moment state for one flat vector."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def update(self, theta: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.step += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.step)
        v_hat = self.v / (1 - self.beta2**self.step)
        return theta - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def fine_tune(params: ModelParams, pairs, cfg: MetaConfig, weights: LossWeights = FINETUNE_WEIGHTS,
              patch_size: Optional[int] = None, on_epoch: Optional[Callable] = None):
    """Mini-batch Adam on all three heads; returns (params, per-epoch records)."""
    examples = list(getattr(pairs, "examples", pairs))
    if not examples:
        raise DataError("fine-tuning needs at least one pair")
    size = patch_size or params.config.patch_size
    opts = [Adam() for _ in range(3)]
    theta = params.copy()
    root = Rng(cfg.seed).child(4)
    records = []
    for epoch in range(cfg.finetune_epochs):
        lr = lr_at(cfg.finetune_lr, epoch, cfg.lr_decay_factor, cfg.lr_decay_every_finetune)
        gen = root.child(epoch).generator()
        losses = []
        for idx in minibatches(len(examples), cfg.data_batch, gen):
            batch = [crop_example(examples[i], size, gen) for i in idx]
            loss, g = forward_backward(theta, batch, weights)
            theta = theta.replace(*(o.update(t, gt, lr) for o, t, gt in zip(opts, theta.vectors(), g.vectors())))
            losses.append(loss)
        rec = {"epoch": epoch + 1, "lr": lr, "train_loss": float(np.mean(losses))}
        records.append(rec)
        if on_epoch:
            on_epoch(rec)
        log.info("finetune epoch %d loss=%.6f", epoch + 1, rec["train_loss"])
    return theta, records


def predict_padded(params: ModelParams, I) -> Prediction:
    """Forward pass on an arbitrary-size image via reflect padding and cropping."""
    I = as_image(I, "input")
    h, w = I.shape[:2]
    m = params.config.multiple
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        mode = "reflect" if min(h, w) > 1 and ph < h and pw < w else "symmetric"
        padded = np.pad(I, ((0, ph), (0, pw), (0, 0)), mode=mode)
    else:
        padded = I
    pred = forward(params, padded)
    return Prediction(J=pred.J[:h, :w], B=pred.B[:h, :w], t=pred.t[:h, :w])


def enhance(params: ModelParams, I, with_fields: bool = False):
    """Clean-image estimate; with ``with_fields`` also returns (J, t, B)."""
    pred = predict_padded(params, I)
    if with_fields:
        return pred.J, pred.t, pred.B
    return pred.J


__all__ = ["Adam", "enhance", "evaluate", "fine_tune", "predict_padded"]
