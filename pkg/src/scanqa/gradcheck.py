"""Finite-difference verification of the analytic gradients.

Central differences are only valid away from the kinks introduced by
ReLU and max pooling: if a perturbation of size eps flips an
activation sign or a pool argmax, the measured slope is garbage. Cases
are therefore drawn from a seeded stream and redrawn until every
preactivation and pool margin clears a safety threshold proportional
to eps. The redraw loop is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .losses import (LossVariant, axis_loss, per_class_losses,
                     per_sample_losses, weighted_ce_weights)
from .nn import engine as eng
from .nn.engine import backward_total
from .nn.model import ModelConfig, forward, init_model
from .reweight import class_grad_norms, combine_losses, compute_alpha
from .streams import substream, substream_int

TINY_CONFIG = ModelConfig(height=10, width=10, conv_channels=(1, 2), trunk_width=6)

# A perturbation of size eps moves preactivations by at most eps times
# the path gain, which the clipped inputs and Glorot weights keep below
# ~4 at this scale; margins of 8*eps leave headroom while staying
# reachable by redrawing (a few hundred kink sites per case).
_MARGIN_FACTOR = 8.0
_MAX_REDRAWS = 400


def _kink_margin(tape) -> float:
    """Smallest distance to a ReLU sign flip or pool argmax swap.

    Pool windows whose runner-up is an exact ReLU zero are ignored: the
    zero can only move once its preactivation crosses zero, and that is
    the ReLU margin's job.
    """
    margin = np.inf
    for node in tape.nodes:
        if node.op == "relu":
            margin = min(margin, float(np.abs(node.parents[0].value).min()))
        elif node.op == "maxpool2":
            x = node.parents[0].value
            b, c, h, w = x.shape
            h2, w2 = h // 2, w // 2
            blocks = x[:, :, : 2 * h2, : 2 * w2].reshape(b, c, h2, 2, w2, 2)
            flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(-1, 4)
            top2 = np.partition(flat, 2, axis=1)[:, 2:]
            live = top2[:, 0] > 0.0
            if live.any():
                gaps = top2[live, 1] - top2[live, 0]
                margin = min(margin, float(gaps.min()))
    return margin


def _variant_for(name: str, gamma: float = 2.0) -> LossVariant:
    if name == "weighted_ce":
        # fixed imbalanced counts stand in for a training split
        return LossVariant("weighted_ce",
                           class_weights=tuple(weighted_ce_weights([8, 3, 2])))
    return LossVariant(name, gamma=gamma)


def _build_case(config: ModelConfig, variant: LossVariant, seed: int, eps: float):
    """Seeded (params, batch, targets) with all kink margins cleared."""
    base = replace(config, ordinal_head=variant.kind == "ordinal")
    for attempt in range(_MAX_REDRAWS):
        case_seed = substream_int(seed, "fdcase", attempt)
        cfg = replace(base, seed=case_seed)
        params = init_model(cfg)
        # jitter breaks pool ties and moves zero biases off the kink
        gen = substream(case_seed, "fd-jitter")
        for name in params.names:
            params.tensors[name] += gen.normal(0.0, 0.05, params.tensors[name].shape)
        batch = np.clip(gen.normal(0.0, 1.0, (3, 1, cfg.height, cfg.width)), -2.5, 2.5)
        targets = np.array([0, 1, 2])
        axis_targets = gen.integers(0, 3, size=3)
        _, _, tape = forward(params, batch, cfg)
        if _kink_margin(tape) > _MARGIN_FACTOR * eps:
            return cfg, params, batch, targets, axis_targets
    raise RuntimeError("could not find a kink-free finite-difference case")


def _total_loss(cfg, params, batch, targets, axis_targets, variant,
                reweight: bool, frozen_alphas=None):
    """Build L_total on a fresh tape; returns (loss Var, tape, alphas)."""
    sev, axis, tape = forward(params, batch, cfg)
    per = per_sample_losses(variant, sev, targets)
    ax = axis_loss(axis, axis_targets)
    if not reweight:
        l_cls = eng.scale(eng.sum_all(per), 1.0 / per.value.shape[0])
        return l_cls + ax, tape, None
    cls = per_class_losses(per, targets)
    alphas = frozen_alphas
    if alphas is None:
        alphas = compute_alpha(class_grad_norms(tape, cls, params))
    bundle = combine_losses(cls, alphas, ax)
    return bundle.l_total, tape, alphas


def finite_diff_check(config: ModelConfig, loss_variant: str | LossVariant,
                      seed: int = 0, eps: float = 1e-3,
                      reweight: bool = False) -> float:
    """Max relative error of analytic vs central-difference gradients.

    With reweight on, the class weights are computed once at the base
    point and frozen for all evaluations (they are detached constants,
    so this is the objective the analytic gradient differentiates).
    """
    if not 1e-5 <= eps <= 1e-2:
        raise ValueError("eps must lie in [1e-5, 1e-2]")
    variant = _variant_for(loss_variant) if isinstance(loss_variant, str) else loss_variant
    variant.validate()
    cfg, params, batch, targets, axis_targets = _build_case(config, variant, seed, eps)

    loss, tape, alphas = _total_loss(cfg, params, batch, targets, axis_targets,
                                     variant, reweight)
    params.zero_grads()
    backward_total(tape, loss, 1.0)
    analytic = params.flat_grad()

    def loss_at() -> float:
        val, _, _ = _total_loss(cfg, params, batch, targets, axis_targets,
                                variant, reweight, frozen_alphas=alphas)
        return float(val.value)

    fd = np.empty_like(analytic)
    pos = 0
    for name in params.names:
        tensor = params.tensors[name]
        for idx in np.ndindex(tensor.shape):
            orig = tensor[idx]
            tensor[idx] = orig + eps
            up = loss_at()
            tensor[idx] = orig - eps
            down = loss_at()
            tensor[idx] = orig
            fd[pos] = (up - down) / (2.0 * eps)
            pos += 1

    # near-zero entries are judged against the gradient's overall scale
    scale_floor = max(0.01 * float(np.abs(analytic).max()), 1e-8)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), scale_floor)
    return float((np.abs(analytic - fd) / denom).max())


def gradcheck_battery(loss_variant: str, seeds=range(20), eps: float = 1e-3,
                      config: ModelConfig = TINY_CONFIG) -> float:
    """Max relative error across a battery of seeded cases."""
    return max(finite_diff_check(config, loss_variant, seed=s, eps=eps)
               for s in seeds)
