"""Bi-level meta-training: two plain gradient steps per task, then interpolation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from typing import Callable, Optional

import numpy as np

from ..core import AquaError, DataError, Rng
from ..dataio import MetaDataset, center_crop, sample_tasks
from ..estimator import ArchConfig, ModelParams, forward, forward_backward, init
from ..estimator.network import batch_loss
from ..losses import PRETRAIN_WEIGHTS, LossWeights, NonFiniteLoss
from ..metrics import psnr

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 1e-4
    outer_lr: float = 5e-5
    finetune_lr: float = 1e-5
    task_batch: int = 5
    data_batch: int = 8
    support_size: int = 4
    query_size: int = 4
    pretrain_epochs: int = 40
    finetune_epochs: int = 30
    iters_per_epoch: int = 10
    lr_decay_factor: float = 0.8
    lr_decay_every_pretrain: int = 5
    lr_decay_every_finetune: int = 2
    val_fraction: float = 0.05
    val_max_samples: int = 64
    seed: int = 0

    def __post_init__(self):
        for name in ("inner_lr", "outer_lr", "finetune_lr"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.task_batch < 1:
            raise ValueError("task_batch must be >= 1")
        if self.support_size < 1 or self.query_size < 1:
            raise ValueError("support_size and query_size must be >= 1")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def lr_at(base: float, epoch: int, factor: float = 0.8, every: int = 5) -> float:
    """Step-decayed rate for 0-based ``epoch``."""
    return base * factor ** (epoch // every)


def _step(theta, grad, lr):
    if isinstance(theta, ModelParams):
        return theta.replace(*(t - lr * g for t, g in zip(theta.vectors(), grad.vectors())))
    return theta - lr * grad


class TaskAborted(AquaError):
    pass


def inner_adapt(theta, task, alpha: float, weights: LossWeights = PRETRAIN_WEIGHTS,
                loss_grad: Optional[Callable] = None, return_loss: bool = False):
    """theta' = theta - a grad L_support(theta);  theta_i = theta' - a grad L_query(theta').

    ``loss_grad(theta, examples, weights) -> (loss, grad)`` defaults to the
    three-head network objective.
    """
    fb = loss_grad or forward_backward
    if not task.support or not task.query:
        raise DataError("task needs non-empty support and query sets")
    try:
        _, g_s = fb(theta, task.support, weights)
        theta_p = _step(theta, g_s, alpha)
        l_q, g_q = fb(theta_p, task.query, weights)
    except NonFiniteLoss as exc:
        raise TaskAborted(f"task {getattr(task, 'distortion_id', '?')}: {exc}") from exc
    theta_i = _step(theta_p, g_q, alpha)
    return (theta_i, l_q) if return_loss else theta_i


def outer_update(theta, adapted, beta: float):
    """theta - beta * mean(theta - theta_i), evaluated as (1-beta) theta + beta mean(theta_i).

    The sum runs in task order; k=1, beta=1 returns theta_1 bit-for-bit.
    """
    if not adapted:
        raise ValueError("outer_update needs at least one adapted parameter set")
    k = len(adapted)

    def combine(cur, others):
        acc = np.zeros_like(cur, dtype=np.float64) if np.ndim(cur) else 0.0
        for o in others:
            acc = acc + o
        return (1.0 - beta) * cur + beta * (acc / k)

    if isinstance(theta, ModelParams):
        return theta.replace(*(
            combine(cur, [a.vectors()[h] for a in adapted]) for h, cur in enumerate(theta.vectors())
        ))
    return combine(theta, adapted)


def validation_set(ds: MetaDataset, patch_size: int, limit: int) -> list:
    exs = ds.val_examples()[:limit]
    return [center_crop(e, patch_size) for e in exs]


def evaluate(p: ModelParams, examples, weights: LossWeights = PRETRAIN_WEIGHTS, chunk: int = 16):
    """(mean objective, mean PSNR of the clean-image head) over ``examples``."""
    if not examples:
        return math.nan, math.nan
    total, scores = 0.0, []
    for i in range(0, len(examples), chunk):
        part = examples[i:i + chunk]
        loss, _ = batch_loss(p, part, weights)
        total += loss * len(part)
        pred = forward(p, np.stack([e.I for e in part]))
        scores += [psnr(j, e.J) for j, e in zip(pred.J, part)]
    return total / len(examples), float(np.mean(scores))


def meta_train(ds: MetaDataset, cfg: MetaConfig, arch: ArchConfig, init_params: Optional[ModelParams] = None,
               weights: LossWeights = PRETRAIN_WEIGHTS, threads: int = 1, on_epoch: Optional[Callable] = None):
    """Run the meta-training loop; returns (params, per-epoch log records).

    Record 0 holds the validation scores of the initial parameters.
    """
    if len(ds.train_ids) < cfg.task_batch:
        raise DataError(
            f"dataset has {len(ds.train_ids)} training distortion configurations; task_batch={cfg.task_batch}"
        )
    theta = init_params.copy() if init_params is not None else init(arch, cfg.seed)
    val = validation_set(ds, arch.patch_size, cfg.val_max_samples)
    records = []

    def record(epoch, lr_in, lr_out, meta_loss):
        v_loss, v_psnr = evaluate(theta, val, weights)
        rec = {"epoch": epoch, "lr": lr_in, "outer_lr": lr_out, "meta_loss": meta_loss,
               "val_loss": v_loss, "val_psnr": v_psnr}
        records.append(rec)
        if on_epoch:
            on_epoch(rec)
        log.info("epoch %d meta_loss=%s val_loss=%.6f val_psnr=%.3f", epoch, meta_loss, v_loss, v_psnr)

    record(0, cfg.inner_lr, cfg.outer_lr, None)
    root = Rng(cfg.seed).child(3)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for epoch in range(cfg.pretrain_epochs):
            alpha = lr_at(cfg.inner_lr, epoch, cfg.lr_decay_factor, cfg.lr_decay_every_pretrain)
            beta = lr_at(cfg.outer_lr, epoch, cfg.lr_decay_factor, cfg.lr_decay_every_pretrain)
            losses = []
            for it in range(cfg.iters_per_epoch):
                tasks = sample_tasks(ds, root.child(epoch, it), cfg.task_batch, cfg.support_size,
                                     cfg.query_size, arch.patch_size)

                def adapt(task, theta=theta):
                    return inner_adapt(theta, task, alpha, weights, return_loss=True)

                results = list(pool.map(adapt, tasks)) if pool else [adapt(t) for t in tasks]
                theta = outer_update(theta, [r[0] for r in results], beta)
                losses += [r[1] for r in results]
            record(epoch + 1, alpha, beta, float(np.mean(losses)) if losses else None)
    finally:
        if pool:
            pool.shutdown()
    return theta, records
