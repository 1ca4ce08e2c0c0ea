"""Architecture configuration, flat-parameter layout and initialization."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


@dataclass(frozen=True)
class ArchConfig:
    num_enc_blocks: int = 4
    num_dec_blocks: int = 4
    base_channels: int = 8
    max_channels: int = 512
    use_skip: bool = True
    use_shortcut: bool = True
    patch_size: int = 32

    def __post_init__(self):
        if self.num_enc_blocks != self.num_dec_blocks:
            raise ValueError("num_enc_blocks must equal num_dec_blocks")
        if self.num_enc_blocks < 1:
            raise ValueError("need at least one encoder block")
        if self.base_channels < 1 or self.max_channels < self.base_channels:
            raise ValueError("need 1 <= base_channels <= max_channels")
        if self.patch_size % self.multiple:
            raise ValueError(f"patch_size must be a multiple of {self.multiple}")

    @classmethod
    def full_scale(cls) -> "ArchConfig":
        return cls(base_channels=64, max_channels=512, patch_size=256)

    @property
    def multiple(self) -> int:
        """Input height and width must be divisible by this."""
        return 2 ** self.num_enc_blocks

    def channels(self) -> list:
        return [min(self.base_channels * 2**i, self.max_channels) for i in range(self.num_enc_blocks)]

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class Slot:
    name: str
    offset: int
    shape: tuple

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


def _block(prefix: str, c_in: int, c_out: int, cfg: ArchConfig) -> list:
    out = [
        (f"{prefix}.conv1.w", (c_out, c_in, 3, 3)),
        (f"{prefix}.conv1.b", (c_out,)),
        (f"{prefix}.conv2.w", (c_out, c_out, 3, 3)),
        (f"{prefix}.conv2.b", (c_out,)),
    ]
    if cfg.use_shortcut and c_in != c_out:
        out.append((f"{prefix}.proj.w", (c_out, c_in, 1, 1)))
    return out


def block_specs(cfg: ArchConfig) -> tuple:
    """(encoder [(c_in, c_out)], decoder [(c_in, c_out)]) listed in execution order."""
    ch = cfg.channels()
    enc, c_in = [], 3
    for c in ch:
        enc.append((c_in, c))
        c_in = c
    dec, prev = [], ch[-1]
    for j in reversed(range(cfg.num_dec_blocks)):
        c_in = prev + (ch[j] if cfg.use_skip else 0)
        dec.append((c_in, ch[j]))
        prev = ch[j]
    return enc, dec


def layout(cfg: ArchConfig) -> dict:
    """Ordered name -> Slot map for one head's flat parameter vector."""
    enc, dec = block_specs(cfg)
    entries = []
    for i, (ci, co) in enumerate(enc):
        entries += _block(f"enc{i}", ci, co, cfg)
    for j, (ci, co) in enumerate(dec):
        entries += _block(f"dec{j}", ci, co, cfg)
    c_top = cfg.channels()[0]
    entries += [("out.w", (3, c_top, 1, 1)), ("out.b", (3,))]
    slots, off = {}, 0
    for name, shape in entries:
        s = Slot(name, off, shape)
        slots[name] = s
        off += s.size
    return slots


def param_count(cfg: ArchConfig) -> int:
    return sum(s.size for s in layout(cfg).values())


HEADS = ("J", "B", "T")


@dataclass
class ModelParams:
    """Three independent flat parameter vectors, one per head."""

    config: ArchConfig
    J: np.ndarray
    B: np.ndarray
    T: np.ndarray
    seed: int = 0

    def vectors(self) -> tuple:
        return (self.J, self.B, self.T)

    def replace(self, J, B, T) -> "ModelParams":
        return ModelParams(self.config, J, B, T, self.seed)

    def map(self, fn) -> "ModelParams":
        return self.replace(*(fn(v) for v in self.vectors()))

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.vectors())

    @classmethod
    def from_flat(cls, like: "ModelParams", flat: np.ndarray) -> "ModelParams":
        n = like.J.size
        return like.replace(flat[:n].copy(), flat[n:2 * n].copy(), flat[2 * n:].copy())

    def equals(self, other: "ModelParams") -> bool:
        return self.config == other.config and all(
            np.array_equal(a, b) for a, b in zip(self.vectors(), other.vectors())
        )


def init(cfg: ArchConfig, seed: int) -> ModelParams:
    """Fan-in scaled normal weights, zero biases; each head has its own stream."""
    slots = layout(cfg)
    n = param_count(cfg)
    heads = []
    for hi in range(len(HEADS)):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(7, hi))))
        theta = np.zeros(n)
        for s in slots.values():
            if s.name.endswith(".b"):
                continue
            fan_in = int(np.prod(s.shape[1:]))
            std = np.sqrt(2.0 / 1.01 / fan_in)
            if s.name == "out.w":
                std = 0.1 / np.sqrt(fan_in)
            elif s.name.endswith("conv2.w") and cfg.use_shortcut:
                # residual branches start small so each block is close to its shortcut
                std *= 0.1
            theta[s.offset:s.offset + s.size] = gen.standard_normal(s.size) * std
        heads.append(theta)
    return ModelParams(cfg, *heads, seed=int(seed))
