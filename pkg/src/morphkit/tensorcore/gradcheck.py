"""Central finite-difference verification of tape gradients."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from morphkit.errors import NumericalError
from morphkit.tensorcore.engine import Tape, Tensor, no_grad


def grad_check(model_fn: Callable[[], Tensor], params: Sequence[Tensor],
               h: float = 1e-5, tol: float = 1e-4, n_coords: int = 200,
               rng: np.random.Generator | None = None) -> float:
    """Compare tape gradients against central differences.

    model_fn rebuilds the scalar loss from the current parameter values and
    must be deterministic.  Up to n_coords coordinates are sampled per
    parameter.  Returns the max relative error over all sampled
    coordinates; `tol` is advisory for callers (no raise on exceedance).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    params = list(params)
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = model_fn()
        tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    def eval_loss() -> float:
        with no_grad():
            value = float(model_fn().data)
        if not np.isfinite(value):
            raise NumericalError("grad_check: non-finite loss during probing")
        return value

    max_rel = 0.0
    for p, an in zip(params, analytic):
        flat = p.data.reshape(-1)
        an_flat = an.reshape(-1)
        size = flat.shape[0]
        if size <= n_coords:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=n_coords, replace=False)
        for idx in coords:
            orig = flat[idx]
            flat[idx] = orig + h
            f_plus = eval_loss()
            flat[idx] = orig - h
            f_minus = eval_loss()
            flat[idx] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            denom = max(abs(fd), abs(an_flat[idx]))
            if denom < 1e-10:
                continue
            rel = abs(fd - an_flat[idx]) / denom
            if rel > max_rel:
                max_rel = rel
    return max_rel
