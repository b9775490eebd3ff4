"""Gradient-descent optimization of a free embedding field.

Stands in for training an embedding head at desk scale: initialize every
pixel's embedding uniformly at random, then run fixed-step gradient descent
on the discriminative loss against a ground-truth label map. Also provides
the central finite-difference gradient used to cross-check the analytic one,
and post-hoc normalization onto the unit sphere for clustering.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BinaryMask, EmbeddingField, LabelMap, validate_pair
from .errors import DegenerateVector, EmptyInstance, NonFiniteLoss
from .losses import (
    DiscriminativeConfig,
    GradientField,
    LossBreakdown,
    _breakdown_arrays,
    _grad_arrays,
)


@dataclass(frozen=True)
class OptimizerConfig:
    """Fixed-step gradient-descent settings.

    step_size scales with foreground pixel count: the pull term's per-pixel
    gradient carries a 1/(C*n_c) factor, so useful steps on dense maps are
    much larger than 1.
    """

    step_size: float = 40.0
    max_steps: int = 600
    loss_tolerance: float = 0.0
    seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        if not math.isfinite(self.step_size) or self.step_size <= 0:
            raise ValueError(f"step_size must be finite and > 0, got {self.step_size}")
        if self.max_steps < 0:
            raise ValueError(f"max_steps must be >= 0, got {self.max_steps}")
        if not math.isfinite(self.loss_tolerance) or self.loss_tolerance < 0:
            raise ValueError(f"loss_tolerance must be >= 0, got {self.loss_tolerance}")
        if not math.isfinite(self.init_scale) or self.init_scale <= 0:
            raise ValueError(f"init_scale must be finite and > 0, got {self.init_scale}")
        if self.seed < 0:
            raise ValueError(f"seed must be >= 0, got {self.seed}")


@dataclass(frozen=True)
class OptimizationTrace:
    """Loss curve of a descent run.

    breakdowns[0] is the loss at initialization and each later entry follows
    one update, so len(breakdowns) == steps_taken + 1.
    """

    breakdowns: tuple
    final: EmbeddingField
    steps_taken: int


def finite_diff_grad(
    emb: EmbeddingField,
    labels: LabelMap,
    cfg: DiscriminativeConfig,
    step: float = 1e-5,
) -> GradientField:
    """Central finite-difference gradient of the total loss.

    Perturbs every foreground coordinate by +-step; background entries stay
    zero. This is the oracle the analytic gradient is validated against.
    """
    if step <= 0:
        raise ValueError(f"step must be > 0, got {step}")
    validate_pair(emb, labels)
    base = emb.values.copy()
    label_values = labels.values
    out = np.zeros_like(base)
    fg_rows, fg_cols = np.nonzero(label_values > 0)
    if fg_rows.size == 0:
        raise EmptyInstance("label map has no foreground instances")
    for y, x in zip(fg_rows, fg_cols):
        for d in range(base.shape[2]):
            saved = base[y, x, d]
            base[y, x, d] = saved + step
            hi = _breakdown_arrays(base, label_values, cfg).total
            base[y, x, d] = saved - step
            lo = _breakdown_arrays(base, label_values, cfg).total
            base[y, x, d] = saved
            out[y, x, d] = (hi - lo) / (2.0 * step)
    return out


def optimize_embeddings(
    labels: LabelMap,
    d: int,
    loss_cfg: DiscriminativeConfig,
    opt_cfg: OptimizerConfig,
) -> OptimizationTrace:
    """Descend the discriminative loss from a seeded uniform initialization.

    Embeddings start uniform in [-init_scale, +init_scale] per coordinate.
    Each step subtracts step_size times the analytic gradient; the breakdown
    at initialization and after every update is recorded. Stops when the
    total drops to loss_tolerance or after max_steps updates, whichever
    comes first.
    """
    if d < 1:
        raise ValueError(f"embedding dimension must be >= 1, got {d}")
    if labels.num_instances < 1:
        raise EmptyInstance("label map has no foreground instances")
    rng = np.random.default_rng(opt_cfg.seed)
    shape = (labels.height, labels.width, d)
    cur = rng.uniform(-opt_cfg.init_scale, opt_cfg.init_scale, size=shape)
    label_values = labels.values

    bd = _breakdown_arrays(cur, label_values, loss_cfg)
    if not bd.finite():
        raise NonFiniteLoss("loss is not finite at initialization")
    breakdowns = [bd]
    steps = 0
    while bd.total > opt_cfg.loss_tolerance and steps < opt_cfg.max_steps:
        grad = _grad_arrays(cur, label_values, loss_cfg)
        cur = cur - opt_cfg.step_size * grad
        steps += 1
        if not np.all(np.isfinite(cur)):
            raise NonFiniteLoss(f"embeddings diverged after {steps} steps; reduce step_size")
        bd = _breakdown_arrays(cur, label_values, loss_cfg)
        if not bd.finite():
            raise NonFiniteLoss(f"loss diverged after {steps} steps; reduce step_size")
        breakdowns.append(bd)
    return OptimizationTrace(tuple(breakdowns), EmbeddingField(cur), steps)


def normalize_field(emb: EmbeddingField, mask: BinaryMask | None = None) -> EmbeddingField:
    """Scale vectors to unit Euclidean norm.

    With a mask, only mask-1 pixels are normalized and background vectors are
    copied through unchanged (they are exempt from the unit-norm contract).
    Raises DegenerateVector if any vector to be normalized has norm < 1e-12.
    """
    values = emb.values
    norms = np.sqrt(np.einsum("hwd,hwd->hw", values, values))
    if mask is not None:
        validate_pair(emb, mask)
        select = mask.values.astype(bool)
    else:
        select = np.ones(norms.shape, dtype=bool)
    picked = norms[select]
    if picked.size and picked.min() < 1e-12:
        raise DegenerateVector("cannot normalize a vector with norm < 1e-12")
    out = values.copy()
    out[select] = values[select] / norms[select][:, None]
    return EmbeddingField(out, normalized=True)
