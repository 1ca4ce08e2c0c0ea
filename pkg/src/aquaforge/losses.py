"""Training examples, predictions and the four-term L1 objective.

The objective is ``c_J L_J + c_B L_B + c_T L_T + c_I L_I`` where every term is a
mean absolute difference and ``L_I`` compares the observed degraded image with
``J t + B (1 - t)`` rebuilt from the three predicted fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import AquaError, check_same_shape


class NonFiniteLoss(AquaError):
    pass


@dataclass(frozen=True)
class LossWeights:
    c_J: float = 1.0
    c_B: float = 1.0
    c_T: float = 1.0
    c_I: float = 0.5

    def __post_init__(self):
        for name in ("c_J", "c_B", "c_T", "c_I"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"loss weight {name} must be finite and >= 0, got {v}")
            object.__setattr__(self, name, v)

    def as_tuple(self) -> tuple:
        return (self.c_J, self.c_B, self.c_T, self.c_I)


PRETRAIN_WEIGHTS = LossWeights(1.0, 1.0, 1.0, 0.5)
FINETUNE_WEIGHTS = LossWeights(1.0, 0.0, 0.0, 1.0)


@dataclass
class Example:
    """One training pair: degraded input plus whatever targets are known.

    Arrays are (H, W, 3).  ``t`` and ``B`` are None for real paired data.
    """

    I: np.ndarray
    J: np.ndarray
    t: Optional[np.ndarray] = None
    B: Optional[np.ndarray] = None
    source: str = ""


@dataclass
class Prediction:
    J: np.ndarray
    B: np.ndarray
    t: np.ndarray


class LossTerms(NamedTuple):
    L_J: float
    L_B: float
    L_T: float
    L_I: float


def recompose(J, t, B):
    return J * t + B * (1.0 - t)


def loss_components(pred: Prediction, target: Example) -> LossTerms:
    """Mean absolute errors of the three heads and of the recomposed image.

    Terms whose target is missing (``t`` or ``B`` is None) come back as NaN.
    """
    check_same_shape(pred.J, pred.B, pred.t, target.I, target.J, names=("J", "B", "t", "I", "J_gt"))
    l_j = float(np.mean(np.abs(pred.J - target.J)))
    l_b = float(np.mean(np.abs(pred.B - target.B))) if target.B is not None else math.nan
    l_t = float(np.mean(np.abs(pred.t - target.t))) if target.t is not None else math.nan
    l_i = float(np.mean(np.abs(target.I - recompose(pred.J, pred.t, pred.B))))
    return LossTerms(l_j, l_b, l_t, l_i)


def total_loss(terms, w: LossWeights) -> float:
    total = 0.0
    for c, v in zip(w.as_tuple(), terms):
        if c != 0.0:
            total += c * v
    return total


def loss_and_grads(I, J_gt, t_gt, B_gt, J, B, t, w: LossWeights):
    """Objective value, its terms and d(loss)/d(J, B, t).

    All arrays share one shape; the loss is the mean over every element, so a
    batch stacked along a leading axis gets the mean-over-batch semantics.
    """
    n = J.size
    dJ = np.zeros_like(J)
    dB = np.zeros_like(B)
    dt = np.zeros_like(t)
    terms = [0.0, 0.0, 0.0, 0.0]
    c_j, c_b, c_t, c_i = w.as_tuple()

    if c_j:
        r = J - J_gt
        terms[0] = float(np.mean(np.abs(r)))
        dJ += (c_j / n) * np.sign(r)
    if c_b:
        if B_gt is None:
            raise ValueError("c_B > 0 but the batch has no background-light targets")
        r = B - B_gt
        terms[1] = float(np.mean(np.abs(r)))
        dB += (c_b / n) * np.sign(r)
    if c_t:
        if t_gt is None:
            raise ValueError("c_T > 0 but the batch has no transmission targets")
        r = t - t_gt
        terms[2] = float(np.mean(np.abs(r)))
        dt += (c_t / n) * np.sign(r)
    if c_i:
        r = recompose(J, t, B) - I
        terms[3] = float(np.mean(np.abs(r)))
        s = (c_i / n) * np.sign(r)
        dJ += s * t
        dB += s * (1.0 - t)
        dt += s * (J - B)

    for name, v in zip(LossTerms._fields, terms):
        if not math.isfinite(v):
            raise NonFiniteLoss(f"loss term {name} is not finite ({v})")
    loss = total_loss(terms, w)
    return loss, LossTerms(*terms), dJ, dB, dt
