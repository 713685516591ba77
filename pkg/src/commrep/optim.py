"""Adam optimizer over Parameter objects."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TrainingError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads):
    """Apply one bias-corrected Adam update in place; increments the step counter.

    Raises TrainingError if any gradient entry is not finite.
    """
    for p in params:
        if not np.all(np.isfinite(grads[p])):
            raise TrainingError(f"non-finite gradient for {p.name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for p in params:
        g = grads[p]
        m = state.m.get(p)
        if m is None:
            m = np.zeros_like(p.value)
            state.m[p] = m
            state.v[p] = np.zeros_like(p.value)
        v = state.v[p]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value = p.value - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
