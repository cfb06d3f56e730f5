"""Severity loss zoo (CE, weighted CE, focal, ordinal) and the axis loss.

All losses are built from tape ops so they are differentiable end to
end; numeric tests can lift plain arrays onto a fresh tape. Per-sample
losses feed `per_class_losses`, whose per-class means are the inputs
to the gradient-norm reweighting machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericFault
from .nn import engine as eng
from .nn.engine import Tape, Var

NUM_CLASSES = 3


def lift(values) -> Var:
    """Wrap a plain array as a constant on a fresh tape (for tests)."""
    return Tape().constant(values)


@dataclass(frozen=True)
class LossVariant:
    """Which severity loss to train with, plus its parameters."""

    kind: str  # ce | weighted_ce | focal | ordinal
    gamma: float = 2.0
    class_weights: tuple[float, ...] | None = None

    def validate(self) -> None:
        if self.kind not in ("ce", "weighted_ce", "focal", "ordinal"):
            raise ValueError(f"unknown loss variant {self.kind!r}")
        if self.gamma < 0:
            raise ValueError("focal gamma must be >= 0")
        if self.kind == "weighted_ce":
            if self.class_weights is None:
                raise ValueError("weighted_ce requires class weights")
            w = np.asarray(self.class_weights)
            if not (np.isfinite(w).all() and (w >= 0).all()):
                raise ValueError("class weights must be finite and non-negative")

    @property
    def head_width(self) -> int:
        return NUM_CLASSES - 1 if self.kind == "ordinal" else NUM_CLASSES


@dataclass(frozen=True)
class ClassLoss:
    """Per-class reduced losses for one batch.

    losses[c] is None exactly when class c is absent from the batch.
    """

    losses: tuple[Var | None, ...]
    counts: tuple[int, ...]

    @property
    def present(self) -> tuple[bool, ...]:
        return tuple(c > 0 for c in self.counts)

    def values(self) -> tuple[float | None, ...]:
        return tuple(None if v is None else float(v.value) for v in self.losses)


def _check_targets(targets, num_classes: int, batch: int) -> np.ndarray:
    t = np.asarray(targets)
    if t.shape != (batch,):
        raise ValueError(f"targets shape {t.shape} does not match batch {batch}")
    if t.size and (t.min() < 0 or t.max() >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    return t.astype(np.intp)


def log_softmax(logits: Var) -> Var:
    return eng.sub_colvec(logits, eng.logsumexp_rows(logits))


def softmax_ce(logits: Var, targets) -> Var:
    """Per-sample -log softmax(logits)[target], shape (B,)."""
    if not np.isfinite(logits.value).all():
        raise NumericFault("non-finite logits in softmax_ce")
    t = _check_targets(targets, logits.value.shape[1], logits.value.shape[0])
    return eng.neg(eng.gather_rows(log_softmax(logits), t))


def per_class_losses(per_sample: Var, targets, num_classes: int = NUM_CLASSES,
                     reduction: str = "mean") -> ClassLoss:
    """Reduce per-sample losses over each class's members.

    reduction "mean" divides by the class count (the default, so the
    reweighting signal reflects per-sample update magnitude); "sum"
    keeps the raw total.
    """
    b = per_sample.value.shape[0]
    if b == 0:
        raise ValueError("empty batch")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    t = _check_targets(targets, num_classes, b)
    losses: list[Var | None] = []
    counts: list[int] = []
    for c in range(num_classes):
        mask = (t == c).astype(np.float64)
        n = int(mask.sum())
        counts.append(n)
        if n == 0:
            losses.append(None)
            continue
        total = eng.sum_all(eng.mul_const(per_sample, mask))
        losses.append(eng.scale(total, 1.0 / n) if reduction == "mean" else total)
    return ClassLoss(tuple(losses), tuple(counts))


def weighted_ce_weights(class_counts) -> np.ndarray:
    """Inverse-frequency weights N/(K*n_c); zero-count classes get 0."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if counts.min() < 0 or counts.sum() <= 0:
        raise ValueError("need non-negative counts with at least one positive")
    k = counts.size
    weights = np.zeros(k)
    nz = counts > 0
    weights[nz] = counts.sum() / (k * counts[nz])
    return weights


def weighted_ce(logits: Var, targets, class_weights) -> Var:
    """Per-sample CE scaled by the true class's weight."""
    w = np.asarray(class_weights, dtype=np.float64)
    t = _check_targets(targets, logits.value.shape[1], logits.value.shape[0])
    return eng.mul_const(softmax_ce(logits, t), w[t])


def focal_loss(logits: Var, targets, gamma: float = 2.0) -> Var:
    """Per-sample -(1 - p_t)^gamma * log p_t."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    t = _check_targets(targets, logits.value.shape[1], logits.value.shape[0])
    log_pt = eng.gather_rows(log_softmax(logits), t)
    modulator = eng.powc(eng.rsub_const(1.0, eng.exp(log_pt)), gamma)
    return modulator * eng.neg(log_pt)


def _corn_masks(targets: np.ndarray, num_classes: int):
    """Participation mask S_k = {i : y_i >= k} and binary targets 1[y >= k+1]."""
    ks = np.arange(num_classes - 1)
    participation = (targets[:, None] >= ks[None, :]).astype(np.float64)
    binary = (targets[:, None] >= ks[None, :] + 1).astype(np.float64)
    return participation, binary


def corn_per_sample(threshold_logits: Var, targets,
                    num_classes: int = NUM_CLASSES) -> Var:
    """Each sample's summed BCE over the thresholds it participates in."""
    b, km1 = threshold_logits.value.shape
    if km1 != num_classes - 1:
        raise ValueError(f"expected {num_classes - 1} threshold logits, got {km1}")
    if not np.isfinite(threshold_logits.value).all():
        raise NumericFault("non-finite threshold logits")
    t = _check_targets(targets, num_classes, b)
    participation, binary = _corn_masks(t, num_classes)
    # BCE with logits: softplus(z) - target * z, overflow-safe
    bce = eng.softplus(threshold_logits) - eng.mul_const(threshold_logits, binary)
    return eng.rowsum(eng.mul_const(bce, participation))


def ordinal_corn_loss(threshold_logits: Var, targets,
                      num_classes: int = NUM_CLASSES) -> Var:
    """Scalar CORN loss: total BCE over all (sample, threshold) pairs
    normalized by the number of pairs, sum_k |S_k|."""
    t = _check_targets(targets, num_classes, threshold_logits.value.shape[0])
    participation, _ = _corn_masks(t, num_classes)
    contributions = corn_per_sample(threshold_logits, t, num_classes)
    return eng.scale(eng.sum_all(contributions), 1.0 / participation.sum())


def ordinal_predict(threshold_logits: np.ndarray) -> np.ndarray:
    """Rank = number of thresholds whose running product of sigmoids
    exceeds 0.5. Monotone: raising any logit never lowers the rank."""
    z = np.asarray(threshold_logits, dtype=np.float64)
    probs = 1.0 / (1.0 + np.exp(-np.clip(z, -60, 60)))
    running = np.cumprod(probs, axis=1)
    return (running > 0.5).sum(axis=1).astype(np.intp)


def axis_loss(axis_logits: Var, axis_targets) -> Var:
    """Mean softmax CE over the batch; always plain CE."""
    per = softmax_ce(axis_logits, axis_targets)
    return eng.scale(eng.sum_all(per), 1.0 / per.value.shape[0])


def per_sample_losses(variant: LossVariant, severity_logits: Var, targets) -> Var:
    """Dispatch to the configured severity loss; returns shape (B,)."""
    if variant.kind == "ce":
        return softmax_ce(severity_logits, targets)
    if variant.kind == "weighted_ce":
        return weighted_ce(severity_logits, targets, variant.class_weights)
    if variant.kind == "focal":
        return focal_loss(severity_logits, targets, variant.gamma)
    if variant.kind == "ordinal":
        return corn_per_sample(severity_logits, targets)
    raise ValueError(f"unknown loss variant {variant.kind!r}")


def predict(variant: LossVariant, severity_logits: np.ndarray) -> np.ndarray:
    """Hard severity predictions from raw head outputs."""
    if variant.kind == "ordinal":
        return ordinal_predict(severity_logits)
    return np.argmax(severity_logits, axis=1)
