"""Weighted multi-label BCE over tiered annotations.

Targets per class: 1 for a primary motif, the configurable secondary-motif
target (smt) for a secondary motif, 0 otherwise. Each image's mean per-class
BCE is scaled by a representativeness weight: rfw for red-flag images, 1 for
standard, cw for canonical. The batch loss is the plain mean over images.

Per-class BCE is evaluated in the fused stable form

    max(x, 0) - x * t + log(1 + exp(-|x|))

which equals -[t log sigmoid(x) + (1 - t) log(1 - sigmoid(x))] exactly but
never exponentiates a large positive argument, and its gradient in the logit
is sigmoid(x) - t with no catastrophic cancellation at extreme logits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError, DataError
from .manifest import AnnotationRecord, Tag


@dataclass(frozen=True)
class LossConfig:
    smt: float = 0.5   # training target for secondary motifs
    rfw: float = 0.5   # weight for red-flag images, <= 1
    cw: float = 2.0    # weight for canonical images, >= 1

    def validate(self) -> "LossConfig":
        if not 0.0 <= self.smt <= 1.0:
            raise ConfigError(f"smt out of range [0, 1]: {self.smt}")
        if not 0.0 < self.rfw <= 1.0:
            raise ConfigError(f"rfw out of range (0, 1]: {self.rfw}")
        if self.cw < 1.0:
            raise ConfigError(f"cw must be >= 1: {self.cw}")
        return self


def build_targets(annotation: AnnotationRecord, config: LossConfig,
                  n_classes: int) -> np.ndarray:
    """Target vector with entries in {0, smt, 1}."""
    t = np.zeros(n_classes, dtype=np.float64)
    for j in annotation.secondary:
        t[j] = config.smt
    for j in annotation.primary:
        t[j] = 1.0
    return t


def image_weight(annotation: AnnotationRecord, config: LossConfig) -> float:
    """Loss weight from the image's representativeness tag.

    One tag per image; with several primary motifs the tag already reflects
    the highest tier present (canonical > standard > red flag), so the
    mapping is direct.
    """
    if annotation.tag is Tag.RED_FLAG:
        return config.rfw
    if annotation.tag is Tag.CANONICAL:
        return config.cw
    return 1.0


def bce_per_class(logit: float, target: float) -> float:
    """Stable BCE between sigmoid(logit) and a target in [0, 1]; always >= 0."""
    x = float(logit)
    return max(x, 0.0) - x * float(target) + float(np.log1p(np.exp(-abs(x))))


def _bce_matrix(logits: np.ndarray, targets: np.ndarray) -> np.ndarray:
    return (np.maximum(logits, 0.0) - logits * targets
            + np.log1p(np.exp(-np.abs(logits))))


def image_loss(logits: np.ndarray, annotation: AnnotationRecord,
               config: LossConfig) -> float:
    """weight * mean over all classes of per-class BCE."""
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    n_classes = logits.shape[0]
    targets = build_targets(annotation, config, n_classes)
    w = image_weight(annotation, config)
    return w * float(np.mean(_bce_matrix(logits, targets)))


def batch_targets_and_weights(annotations: Sequence[AnnotationRecord],
                              config: LossConfig, n_classes: int,
                              ) -> tuple[np.ndarray, np.ndarray]:
    targets = np.empty((len(annotations), n_classes), dtype=np.float64)
    weights = np.empty(len(annotations), dtype=np.float64)
    for i, ann in enumerate(annotations):
        targets[i] = build_targets(ann, config, n_classes)
        weights[i] = image_weight(ann, config)
    return targets, weights


def batch_loss_and_grad(logit_batch: np.ndarray,
                        annotations: Sequence[AnnotationRecord],
                        config: LossConfig) -> tuple[float, np.ndarray]:
    """Mean weighted image loss over a batch, plus its logit gradient.

    The gradient entry for image i, class j is
    w_i * (sigmoid(x_ij) - t_ij) / (N * B).
    """
    logits = np.ascontiguousarray(logit_batch, dtype=np.float64)
    if logits.ndim != 2:
        raise DataError(f"expected (B, N) logits, got shape {logits.shape}")
    b, n_classes = logits.shape
    if b == 0:
        raise DataError("empty batch")
    if len(annotations) != b:
        raise DataError(f"{b} logit rows but {len(annotations)} annotations")
    targets, weights = batch_targets_and_weights(annotations, config, n_classes)
    per_class = _bce_matrix(logits, targets)
    loss = float(np.mean(weights * np.mean(per_class, axis=1)))
    grad = weights[:, None] * (kernels.sigmoid_array(logits) - targets)
    grad /= n_classes * b
    return loss, grad
