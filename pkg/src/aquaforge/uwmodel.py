"""Underwater image formation: I = J t + B (1 - t), with t = exp(-c d)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DataError, as_depth, as_image, check_same_shape, clamp01

T_FLOOR = 0.05


@dataclass(frozen=True)
class Attenuation:
    """Per-channel decay factors e^{-c} per meter, ordered (R, G, B)."""

    factors: tuple

    def __post_init__(self):
        f = tuple(float(v) for v in self.factors)
        if len(f) != 3:
            raise ValueError(f"need 3 attenuation factors, got {len(f)}")
        for v in f:
            if not (0.0 < v < 1.0):
                raise ValueError(f"attenuation factor must lie in (0, 1), got {v}")
        object.__setattr__(self, "factors", f)

    @property
    def coefficients(self) -> np.ndarray:
        """c_lambda = -ln(factor), in 1/m."""
        return np.array([-math.log(v) for v in self.factors])


def transmission_from_depth(d, a: Attenuation) -> np.ndarray:
    d = as_depth(d)
    factors = np.asarray(a.factors)
    return np.power(factors[None, None, :], d[:, :, None])


def compose_underwater(J, t, B) -> np.ndarray:
    J = as_image(J, "J")
    t = as_image(t, "t")
    B = as_image(B, "B")
    check_same_shape(J, t, B, names=("J", "t", "B"))
    return clamp01(J * t + B * (1.0 - t))


def invert_underwater(I, t, B, t_floor: float = T_FLOOR) -> np.ndarray:
    """Recover J from I given t and B; t is floored to keep the division bounded."""
    I = as_image(I, "I")
    t = as_image(t, "t")
    B = as_image(B, "B")
    check_same_shape(I, t, B, names=("I", "t", "B"))
    return clamp01((I - B * (1.0 - t)) / np.maximum(t, t_floor))


__all__ = [
    "Attenuation",
    "DataError",
    "T_FLOOR",
    "compose_underwater",
    "invert_underwater",
    "transmission_from_depth",
]
