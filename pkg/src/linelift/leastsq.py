"""Small damped Gauss-Newton least-squares core.

Minimizes sum((f_k(z) / s_k)^2) for residual callables with analytic
Jacobians.  Levenberg-style damping keeps steps well-defined when the
system is underdetermined (fewer equations than variables), which is the
common case midway through constraint selection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class LsqResult:
    z: np.ndarray
    rms: float
    iterations: int


def gauss_newton(
    residual_fn: ResidualFn,
    jacobian_fn: JacobianFn,
    z0: np.ndarray,
    max_iters: int = 200,
    rms_tol: float = 1e-9,
    step_tol: float = 1e-12,
    bailout_after: int = 0,
    bailout_rms: float = 0.0,
) -> LsqResult:
    """Damped Gauss-Newton from z0.

    Stops when the scaled RMS drops below rms_tol, the step stalls, no
    damping level yields an improvement, or the iteration cap is hit.
    With a bailout configured, gives up once ``bailout_after`` iterations
    have passed while the RMS still exceeds ``bailout_rms`` (cheap exit
    for clearly infeasible systems).  Returns the best point found either
    way; the caller judges the RMS.
    """
    z = np.asarray(z0, dtype=float).copy()
    lam = 1e-4
    r = residual_fn(z)
    cost = float(r @ r)
    n_eq = max(len(r), 1)
    iterations = 0
    if not np.isfinite(cost):
        return LsqResult(z, float("inf"), 0)
    for iterations in range(1, max_iters + 1):
        if np.sqrt(cost / n_eq) < rms_tol:
            break
        if bailout_after and iterations > bailout_after and np.sqrt(cost / n_eq) > bailout_rms:
            break
        jac = jacobian_fn(z)
        jtj = jac.T @ jac
        jtr = jac.T @ r
        if float(np.linalg.norm(jtr)) < 1e-15:
            break
        step = None
        for _ in range(25):
            try:
                trial = np.linalg.solve(jtj + lam * np.eye(len(z)), -jtr)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            r_new = residual_fn(z + trial)
            cost_new = float(r_new @ r_new)
            if np.isfinite(cost_new) and cost_new < cost:
                step, r, cost = trial, r_new, cost_new
                break
            lam *= 10.0
        if step is None:
            break
        z = z + step
        lam = max(lam / 3.0, 1e-12)
        if float(np.linalg.norm(step)) < step_tol * (1.0 + float(np.linalg.norm(z))):
            break
    return LsqResult(z, float(np.sqrt(cost / n_eq)), iterations)
