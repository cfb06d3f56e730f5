"""Adam with bias correction, and the cosine learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError
from .engine import ParamStore


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0


def init_adam(params: ParamStore) -> AdamState:
    state = AdamState()
    for name in params.names:
        state.m[name] = np.zeros_like(params.tensors[name])
        state.v[name] = np.zeros_like(params.tensors[name])
    return state


def adam_step(params: ParamStore, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place update from the current gradient buffers."""
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for name in params.names:
        g = params.grads[name]
        m, v = state.m[name], state.v[name]
        if m.shape != g.shape:
            raise ConfigurationError(f"adam state shape mismatch for {name!r}")
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params.tensors[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.version += 1


def cosine_lr(step: int, total_steps: int, lr_max: float, lr_min: float) -> float:
    """Cosine annealing from lr_max at step 0 to lr_min at total_steps."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
