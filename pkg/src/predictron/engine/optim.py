from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ParameterSet


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: ParameterSet, state: AdamState, scope: str = "both") -> None:
    """One bias-corrected Adam update over ``scope``; clears the gradients."""
    names = params.names(scope)
    for name in names:
        if params[name].grad is None:
            raise ValueError(f"no gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for name in names:
        p = params[name]
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / corr1
        vhat = v / corr2
        p.data -= (state.lr * mhat / (np.sqrt(vhat) + state.epsilon)).astype(p.dtype, copy=False)
        p.grad = None
