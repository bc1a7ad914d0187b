"""Projected-gradient descent with spectral steps and backtracking.

Shared by the tomographic reconstruction (box constraints) and the
mechanism fit (nonpositive orthant). The step length follows the
Barzilai-Borwein spectral rule with a nonmonotone backtracking line
search; every operation is deterministic, so equal inputs give bitwise
equal iterates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["PgdResult", "minimize_projected"]

_SUFFICIENT_DECREASE = 1e-4
_STEP_BOUNDS = (1e-12, 1e12)
_MEMORY = 10


@dataclass
class PgdResult:
    """Final iterate of a projected-gradient solve."""

    x: np.ndarray
    objective: float
    pg_norm: float
    iterations: int
    converged: bool


def minimize_projected(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    project: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    *,
    tol: float,
    max_iterations: int,
) -> PgdResult:
    """Minimize a smooth objective over a convex set by projected gradient.

    Convergence is declared when the natural residual
    ``|| x - project(x - grad(x)) ||_2`` falls to ``tol``. Returns the best
    feasible iterate found either way; the caller decides whether a
    non-converged result is an error.
    """
    x = project(np.asarray(x0, dtype=float))
    f = fun(x)
    g = grad(x)
    recent = deque([f], maxlen=_MEMORY)
    step = 1.0 / max(float(np.max(np.abs(g))), 1e-12)
    step = float(np.clip(step, *_STEP_BOUNDS))

    pg_norm = float(np.linalg.norm(x - project(x - g)))
    for iteration in range(max_iterations):
        if pg_norm <= tol:
            return PgdResult(x, f, pg_norm, iteration, converged=True)

        direction = project(x - step * g) - x
        slope = float(g @ direction)
        if slope >= 0.0 or not np.any(direction):
            # Projection arc is ascent-free only up to rounding; shrink.
            step = max(step * 0.1, _STEP_BOUNDS[0])
            direction = project(x - step * g) - x
            slope = float(g @ direction)
            if slope >= 0.0 or not np.any(direction):
                return PgdResult(x, f, pg_norm, iteration, converged=pg_norm <= tol)

        reference = max(recent)
        t = 1.0
        while True:
            x_new = x + t * direction
            f_new = fun(x_new)
            if f_new <= reference + _SUFFICIENT_DECREASE * t * slope or t < 1e-14:
                break
            t *= 0.5

        g_new = grad(x_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        ss = float(s @ s)
        if sy > 1e-300:
            step = float(np.clip(ss / sy, *_STEP_BOUNDS))
        else:
            step = float(np.clip(step * 2.0, *_STEP_BOUNDS))

        x, f, g = x_new, f_new, g_new
        recent.append(f)
        pg_norm = float(np.linalg.norm(x - project(x - g)))

    return PgdResult(x, f, pg_norm, max_iterations, converged=pg_norm <= tol)
