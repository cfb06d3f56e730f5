"""Gradient-norm class reweighting.

For each class present in the batch, the l2 norm of its mean loss
gradient over the severity-head parameters measures the update the
class would induce in isolation. Classes are weighted by the smallest
observed norm over their own, so the gentlest class keeps weight 1 and
louder classes are scaled down. The weights are detached constants: no
gradient flows through the norms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import ClassLoss
from .nn import engine as eng
from .nn.engine import ParamStore, Tape, Var, head_grad

GRAD_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class GradNorms:
    """Per-class gradient norms; absent classes carry 0.0 and present=False."""

    values: tuple[float, ...]
    present: tuple[bool, ...]


@dataclass(frozen=True)
class AlphaWeights:
    """Per-class loss weights in (0, 1]; the minimal-norm class gets 1."""

    values: tuple[float, ...]
    present: tuple[bool, ...]


@dataclass(frozen=True)
class LossBundle:
    class_losses: ClassLoss
    alphas: AlphaWeights
    axis: Var
    l_cls: Var
    l_total: Var


def class_grad_norms(tape: Tape, class_losses: ClassLoss,
                     params: ParamStore) -> GradNorms:
    """phi_c = ||grad of class c's loss over the severity head||_2.

    Leaves the main gradient buffers untouched.
    """
    values = []
    present = []
    for loss in class_losses.losses:
        if loss is None:
            values.append(0.0)
            present.append(False)
        else:
            g = head_grad(tape, loss, params)
            values.append(float(np.linalg.norm(g)))
            present.append(True)
    return GradNorms(tuple(values), tuple(present))


def compute_alpha(norms: GradNorms, eps: float = GRAD_NORM_FLOOR) -> AlphaWeights:
    """alpha_c = min over present classes of clamped phi, divided by phi_c."""
    if not any(norms.present):
        raise ValueError("no class present in batch")
    clamped = [max(v, eps) for v in norms.values]
    smallest = min(v for v, p in zip(clamped, norms.present) if p)
    values = tuple(smallest / v if p else 0.0
                   for v, p in zip(clamped, norms.present))
    return AlphaWeights(values, norms.present)


def combine_losses(class_losses: ClassLoss, alphas: AlphaWeights,
                   axis_loss: Var) -> LossBundle:
    """L_cls = sum over present classes of alpha_c * L_c; total adds the
    axis loss with coefficient 1. Alphas are constants in differentiation."""
    if alphas.present != class_losses.present:
        raise ValueError("presence flags of alphas and class losses disagree")
    l_cls: Var | None = None
    for loss, a, p in zip(class_losses.losses, alphas.values, alphas.present):
        if not p:
            continue
        term = eng.scale(loss, a)
        l_cls = term if l_cls is None else l_cls + term
    l_total = l_cls + axis_loss
    return LossBundle(class_losses, alphas, axis_loss, l_cls, l_total)
