"""Adam with bias correction (beta1=0.9, beta2=0.999, lr=0.001)."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from morphkit.errors import NumericalError, ShapeError
from morphkit.tensorcore.engine import Tensor


class AdamState:
    """First/second moment accumulators for a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], lr: float = 0.001,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """One bias-corrected Adam update; increments t and clears gradients."""
    params = list(params)
    if len(params) != len(state.m):
        raise ShapeError(
            f"adam_step: {len(params)} params vs state of {len(state.m)}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        if p.grad is None:
            raise NumericalError(
                f"adam_step: parameter {p.name or '<unnamed>'} has no gradient")
        if m.shape != p.data.shape:
            raise ShapeError(
                f"adam_step: state shape {m.shape} vs parameter {p.data.shape}")
        g = p.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        update = (state.lr / c1) * m / (np.sqrt(v / c2) + state.eps)
        p.data -= update
        if not np.all(np.isfinite(p.data)):
            raise NumericalError(
                f"adam_step: non-finite values in {p.name or '<unnamed>'}")
        p.grad.fill(0.0)
