"""Three-head encoder-decoder: forward pass and exact reverse-mode gradients.

Encoder block: conv3x3 -> leaky -> conv3x3, plus a shortcut from the block
input (1x1 projection when widths differ), leaky, then 2x average pooling.
Decoder block: bilinear 2x upsampling, concatenation with the mirrored encoder
output, then the same two-conv body with shortcut.  A 1x1 output conv and a
sigmoid produce each head; the transmission head is squashed into [T_FLOOR, 1].
"""
from __future__ import annotations

import numpy as np

from ..core import DataError, as_image
from ..losses import LossWeights, Prediction, loss_and_grads, recompose
from ..uwmodel import T_FLOOR
from . import layers as L
from .arch import ArchConfig, ModelParams, layout


def _views(theta: np.ndarray, slots: dict) -> dict:
    return {name: theta[s.offset:s.offset + s.size].reshape(s.shape) for name, s in slots.items()}


def _block_forward(x, P, prefix, cfg):
    a1, c1 = L.conv2d(x, P[f"{prefix}.conv1.w"], P[f"{prefix}.conv1.b"])
    h1 = L.leaky_relu(a1)
    a2, c2 = L.conv2d(h1, P[f"{prefix}.conv2.w"], P[f"{prefix}.conv2.b"])
    z, cp = a2, None
    if cfg.use_shortcut:
        if f"{prefix}.proj.w" in P:
            s, cp = L.conv2d(x, P[f"{prefix}.proj.w"])
            z = z + s
        else:
            z = z + x
    return L.leaky_relu(z), (c1, a1, c2, cp, z)


def _block_backward(g, P, prefix, cfg, cache, grads):
    c1, a1, c2, cp, z = cache
    gz = L.leaky_relu_backward(g, z)
    gh1, grads[f"{prefix}.conv2.w"], grads[f"{prefix}.conv2.b"] = L.conv2d_backward(gz, P[f"{prefix}.conv2.w"], c2)
    ga1 = L.leaky_relu_backward(gh1, a1)
    gx, grads[f"{prefix}.conv1.w"], grads[f"{prefix}.conv1.b"] = L.conv2d_backward(ga1, P[f"{prefix}.conv1.w"], c1)
    if cfg.use_shortcut:
        if cp is not None:
            gs, grads[f"{prefix}.proj.w"], _ = L.conv2d_backward(gz, P[f"{prefix}.proj.w"], cp)
            gx = gx + gs
        else:
            gx = gx + gz
    return gx


class HeadNet:
    """One sub-network operating on a flat parameter vector."""

    def __init__(self, cfg: ArchConfig):
        self.cfg = cfg
        self.slots = layout(cfg)

    def forward(self, theta, x):
        """Pre-activation output (N, 3, H, W) and the tape for :meth:`backward`."""
        cfg = self.cfg
        P = _views(theta, self.slots)
        n_blocks = cfg.num_enc_blocks
        skips, tape = [], []
        for i in range(n_blocks):
            f, cache = _block_forward(x, P, f"enc{i}", cfg)
            skips.append(f)
            tape.append(cache)
            x = L.avg_pool2(f)
        for j in range(n_blocks):
            u = L.upsample_bilinear2(x)
            level = n_blocks - 1 - j
            inp = np.concatenate([u, skips[level]], axis=1) if cfg.use_skip else u
            x, cache = _block_forward(inp, P, f"dec{j}", cfg)
            tape.append((cache, u.shape[1]))
        o, co = L.conv2d(x, P["out.w"], P["out.b"])
        return o, (tape, co)

    def backward(self, theta, tape, g_out):
        cfg = self.cfg
        P = _views(theta, self.slots)
        grads = {}
        blocks, co = tape
        n_blocks = cfg.num_enc_blocks
        g, grads["out.w"], grads["out.b"] = L.conv2d_backward(g_out, P["out.w"], co)
        g_skips = [None] * n_blocks
        for j in reversed(range(n_blocks)):
            cache, n_up = blocks[n_blocks + j]
            g_in = _block_backward(g, P, f"dec{j}", cfg, cache, grads)
            level = n_blocks - 1 - j
            if cfg.use_skip:
                g_skips[level] = g_in[:, n_up:]
                g_in = g_in[:, :n_up]
            g = L.upsample_bilinear2_backward(g_in)
        for i in reversed(range(n_blocks)):
            g = L.avg_pool2_backward(g)
            if g_skips[i] is not None:
                g = g + g_skips[i]
            g = _block_backward(g, P, f"enc{i}", cfg, blocks[i], grads)
        out = np.zeros_like(theta)
        for name, s in self.slots.items():
            out[s.offset:s.offset + s.size] = grads[name].ravel()
        return out


_NETS: dict = {}


def head_net(cfg: ArchConfig) -> HeadNet:
    net = _NETS.get(cfg)
    if net is None:
        net = _NETS[cfg] = HeadNet(cfg)
    return net


def _to_nchw(batch):
    return np.ascontiguousarray(np.asarray(batch, dtype=np.float64).transpose(0, 3, 1, 2))


def _check_dims(cfg: ArchConfig, h: int, w: int):
    m = cfg.multiple
    if h % m or w % m:
        raise DataError(f"input size {h}x{w} must be divisible by {m} (2^num_enc_blocks)")


def _heads_forward(p: ModelParams, x):
    net = head_net(p.config)
    zj, tj = net.forward(p.J, x)
    zb, tb = net.forward(p.B, x)
    zt, tt = net.forward(p.T, x)
    J = L.sigmoid(zj)
    B = L.sigmoid(zb)
    st = L.sigmoid(zt)
    t = T_FLOOR + (1.0 - T_FLOOR) * st
    return (J, B, t, st), (tj, tb, tt)


def forward(p: ModelParams, I) -> Prediction:
    """Predict (J, B, t) for one (H, W, 3) image or an (N, H, W, 3) batch."""
    arr = np.asarray(I, dtype=np.float64)
    single = arr.ndim == 3
    if single:
        arr = as_image(arr, "input")[None]
    _check_dims(p.config, arr.shape[1], arr.shape[2])
    (J, B, t, _), _ = _heads_forward(p, _to_nchw(arr))
    outs = [a.transpose(0, 2, 3, 1) for a in (J, B, t)]
    if single:
        outs = [a[0] for a in outs]
    return Prediction(J=outs[0], B=outs[1], t=outs[2])


def stack_batch(batch):
    if not batch:
        raise DataError("batch is empty")
    I = np.stack([e.I for e in batch])
    J = np.stack([e.J for e in batch])
    t = None if any(e.t is None for e in batch) else np.stack([e.t for e in batch])
    B = None if any(e.B is None for e in batch) else np.stack([e.B for e in batch])
    return I, J, t, B


def forward_backward(p: ModelParams, batch, weights: LossWeights, return_terms: bool = False):
    """Mean-over-batch objective and its gradient w.r.t. all three heads."""
    I, Jgt, tgt, Bgt = stack_batch(list(batch))
    _check_dims(p.config, I.shape[1], I.shape[2])
    x = _to_nchw(I)
    (J, B, t, st), (tj, tb, tt) = _heads_forward(p, x)
    nhwc = lambda a: a.transpose(0, 2, 3, 1)
    loss, terms, dJ, dB, dt = loss_and_grads(I, Jgt, tgt, Bgt, nhwc(J), nhwc(B), nhwc(t), weights)
    nchw = lambda a: a.transpose(0, 3, 1, 2)
    net = head_net(p.config)
    grads = []
    for theta, tape, g_act, s in ((p.J, tj, nchw(dJ), J), (p.B, tb, nchw(dB), B), (p.T, tt, nchw(dt), st)):
        scale = (1.0 - T_FLOOR) if theta is p.T else 1.0
        if not np.any(g_act):
            grads.append(np.zeros_like(theta))
            continue
        g_z = g_act * scale * s * (1.0 - s)
        grads.append(net.backward(theta, tape, g_z))
    g = p.replace(*grads)
    if return_terms:
        return loss, g, terms
    return loss, g


def batch_loss(p: ModelParams, batch, weights: LossWeights):
    """Objective value and its terms without the backward pass."""
    I, Jgt, tgt, Bgt = stack_batch(list(batch))
    pred = forward(p, I)
    loss, terms, *_ = loss_and_grads(I, Jgt, tgt, Bgt, pred.J, pred.B, pred.t, weights)
    return loss, terms


def switch_pattern(p: ModelParams, batch, weights: LossWeights) -> np.ndarray:
    """Signs of every piecewise-linear switch the objective passes through.

    Two parameter vectors with equal patterns lie in the same linear region of
    every leaky unit and every absolute-value term, which is where a central
    difference is a valid derivative estimate.
    """
    I, Jgt, tgt, Bgt = stack_batch(list(batch))
    x = _to_nchw(I)
    (J, B, t, _), tapes = _heads_forward(p, x)
    n_blocks = p.config.num_enc_blocks
    signs = []
    for blocks, _ in tapes:
        caches = blocks[:n_blocks] + [c for c, _ in blocks[n_blocks:]]
        for _, a1, _, _, z in caches:
            signs += [np.sign(a1).ravel(), np.sign(z).ravel()]
    J, B, t = (a.transpose(0, 2, 3, 1) for a in (J, B, t))
    c_j, c_b, c_t, c_i = weights.as_tuple()
    if c_j:
        signs.append(np.sign(J - Jgt).ravel())
    if c_b:
        signs.append(np.sign(B - Bgt).ravel())
    if c_t:
        signs.append(np.sign(t - tgt).ravel())
    if c_i:
        signs.append(np.sign(recompose(J, t, B) - I).ravel())
    return np.concatenate(signs)
