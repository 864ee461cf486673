"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


def _rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if not analytic.size:
        return 0.0
    if not (np.isfinite(analytic).all() and np.isfinite(numeric).all()):
        return float("inf")
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check_many(f: Callable[[], Tensor], tensors: Sequence[Tensor],
                    step: float = 1e-4) -> float:
    """Max relative error of ``d f / d t`` over every coordinate of ``tensors``.

    ``f`` is a closure over the tensors and must return a scalar. The numeric
    side perturbs ``t.data`` in place and evaluates ``f`` with no tape active.
    """
    saved = [(t.requires_grad, t.grad) for t in tensors]
    for t in tensors:
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f()
    backward(out, tape)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in tensors]
    for t, (rg, g) in zip(tensors, saved):
        t.requires_grad, t.grad = rg, g

    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = float(f().data)
            flat[i] = orig - step
            lo = float(f().data)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * step)
        worst = max(worst, _rel_err(a.reshape(-1), numeric))
    return worst


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-4) -> float:
    """Max relative error |analytic - numeric| / max(1, |analytic|, |numeric|)."""
    return grad_check_many(lambda: f(x), [x], step)
