"""Cross-entropy plus per-sample masked distillation against a frozen teacher.

    L = CE(all samples) + (1/B) * sum_i mask_i * s * H(softmax(old_i / T), softmax(new_i / T))

with temperature ``T`` and scale ``s`` (default ``T**2``). Rows with
``mask_i = 0`` receive no distillation gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UsageError, ValidationError
from .nn import log_softmax, softmax

NORMALIZE_CHOICES = ("batch", "masked")


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 2.0
    distill_scale: float | None = None  # None means temperature ** 2
    distill_weight: float = 1.0
    # "batch": divide the masked sum by B; "masked": by the number of masked rows.
    normalize: str = "batch"

    def validate(self):
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be > 0, got {self.temperature}")
        if self.normalize not in NORMALIZE_CHOICES:
            raise ValidationError(f"normalize must be one of {NORMALIZE_CHOICES}, got {self.normalize!r}")
        return self

    @property
    def scale(self):
        s = self.temperature**2 if self.distill_scale is None else self.distill_scale
        return s * self.distill_weight


def _labels(labels, logits):
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ValidationError(f"labels must lie in [0, {logits.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    return labels.astype(np.intp)


def cross_entropy(logits, labels, with_grad=False):
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = _labels(labels, logits)
    B = logits.shape[0]
    rows = np.arange(B)
    value = -log_softmax(logits)[rows, labels].mean()
    if not with_grad:
        return value
    grad = softmax(logits)
    grad[rows, labels] -= 1.0
    return value, grad / B


def _soft_ce_rows(new_logits, old_logits, temperature):
    q = softmax(old_logits, temperature)
    logp = log_softmax(new_logits, temperature)
    # softmax() for p so that identical logits give p - q == 0 exactly.
    return -(q * logp).sum(axis=1), q, softmax(new_logits, temperature)


def distillation(new_logits, old_logits, config: LossConfig = LossConfig(), with_grad=False):
    """Mean over the batch of s * H(q_i, p_i)."""
    new_logits = np.asarray(new_logits, dtype=np.float64)
    old_logits = np.asarray(old_logits, dtype=np.float64)
    if new_logits.shape != old_logits.shape:
        raise DimensionError(f"student logits {new_logits.shape} vs teacher logits {old_logits.shape}")
    config.validate()
    B = new_logits.shape[0]
    rows, q, p = _soft_ce_rows(new_logits, old_logits, config.temperature)
    value = config.scale * rows.mean()
    if not with_grad:
        return value
    return value, config.scale * (p - q) / (config.temperature * B)


def composite_loss(logits, labels, mask, old_logits=None, config: LossConfig = LossConfig()):
    """Value and gradient w.r.t. ``logits`` of CE + masked distillation."""
    logits = np.asarray(logits, dtype=np.float64)
    config.validate()
    mask = np.asarray(mask, dtype=np.float64)
    B = logits.shape[0]
    if mask.shape != (B,):
        raise DimensionError(f"mask shape {mask.shape} does not match batch size {B}")
    if not np.all((mask == 0) | (mask == 1)):
        raise ValidationError("mask entries must be 0 or 1")
    value, grad = cross_entropy(logits, labels, with_grad=True)
    if not mask.any():
        return value, grad
    if old_logits is None:
        raise UsageError("mask selects old-factor samples but no teacher logits were given")
    old_logits = np.asarray(old_logits, dtype=np.float64)
    if old_logits.shape != logits.shape:
        raise DimensionError(f"student logits {logits.shape} vs teacher logits {old_logits.shape}")
    denom = B if config.normalize == "batch" else mask.sum()
    rows, q, p = _soft_ce_rows(logits, old_logits, config.temperature)
    value = value + config.scale * (mask * rows).sum() / denom
    grad = grad + (config.scale / (config.temperature * denom)) * (mask[:, None] * (p - q))
    return value, grad
