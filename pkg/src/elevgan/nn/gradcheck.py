"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .params import ParamSet, backward
from .tensor import Tape, Tensor


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    excluded: list[tuple[str, int]] = field(default_factory=list)

    def __float__(self) -> float:
        return self.max_rel_error


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-3) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x`` (perturbed in place, then restored)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad


def grad_check(
    f: Callable[[], Tensor],
    params: ParamSet,
    step: float = 1e-3,
    kink_tol: float = 1e-6,
) -> GradCheckResult:
    """Compare tape gradients of scalar ``f()`` against central differences.

    The error per coordinate is ``|analytic - numeric| / max(1, |numeric|)``.
    A coordinate is treated as a kink (and excluded) when the gap between the
    one-sided slopes does not shrink as the step halves, which is what a
    nondifferentiable point such as relu at 0 looks like.
    """
    with Tape() as tape:
        loss = f()
    analytic = backward(tape, loss, params)

    def value() -> float:
        v = float(f().data)
        if not np.isfinite(v):
            raise FloatingPointError("grad_check: objective is not finite")
        return v

    base = value()
    worst = 0.0
    checked = 0
    excluded: list[tuple[str, int]] = []
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        agrad = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            slopes = []
            for h in (step, step / 2):
                flat[i] = orig + h
                up = value()
                flat[i] = orig - h
                down = value()
                slopes.append(((up - base) / h, (base - down) / h, (up - down) / (2 * h)))
            flat[i] = orig
            gap_h = slopes[0][0] - slopes[0][1]
            gap_h2 = slopes[1][0] - slopes[1][1]
            if abs(gap_h) > kink_tol and abs(gap_h2) > 0.75 * abs(gap_h):
                excluded.append((name, i))
                continue
            numeric = slopes[0][2]
            err = abs(agrad[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
            checked += 1
    return GradCheckResult(worst, checked, excluded)
