"""Square-system root finding with restarts and best-solution choice.

Each attempt draws a fresh candidate ordering and a fresh initial depth
vector, selects a square system, and hands it to a Powell-hybrid root
finder.  Among converged attempts the winner is the root satisfying the
most candidates of the full pool, ties going to the earliest attempt.
Attempt seeds depend only on (run seed, attempt index), so growing the
restart budget never changes what earlier attempts did.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.optimize

from .drawing import (
    ConstraintCandidate,
    ConstraintKind,
    DrawingError,
    LineDrawing,
    Provenance,
)
from .equations import EquationSystem, build_system, candidate_equations
from .selection import Selection, SelectorConfig, select_constraints


class InitStrategy(enum.Enum):
    IDENTITY = "identity"
    RANDOM = "random"
    PREDICTED = "predicted"
    GT_NOISE = "gtnoise"


class SolveStatus(enum.Enum):
    SOLVED = "solved"
    SOLVER_FAIL = "solver_fail"
    UNSOLVABLE = "unsolvable"


RANDOM_DEPTH_RANGE = (5.0, 7.0)


@dataclass
class SolveConfig:
    n_restarts: int = 1
    init_strategy: InitStrategy = InitStrategy.GT_NOISE
    init_sigma: float = 0.0
    max_iters: int = 500
    f_tol: float = 1e-12
    sat_tol: float = 1e-6
    seed: int = 0
    method: str = "hybr"  # or "lm"
    selector: SelectorConfig = field(default_factory=SelectorConfig)

    def __post_init__(self):
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.init_sigma < 0:
            raise ValueError("init_sigma must be non-negative")
        if self.method not in ("hybr", "lm"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class Attempt:
    index: int
    selection: Optional[Selection]
    z0: Optional[np.ndarray]
    root: Optional[np.ndarray]
    satisfied: int
    converged: bool


@dataclass
class SolveOutcome:
    status: SolveStatus
    z: Optional[np.ndarray]
    satisfied_count: int
    chosen_attempt: Optional[int]
    attempts: list[Attempt]
    elapsed_s: float = 0.0


def make_initial(d: LineDrawing, strategy: InitStrategy, seed: int = 0, sigma: float = 0.0) -> np.ndarray:
    """Initial depth vector for one attempt.

    identity: every vertex at the true depth of vertex 0 (flat start);
    random: i.i.d. uniform draws on the nominal depth band;
    predicted: the depths carried in the document;
    gtnoise: ground truth plus Gaussian noise, clamped positive.
    """
    m = d.num_vertices
    if strategy is InitStrategy.IDENTITY:
        if d.gt_depths is None:
            raise DrawingError("identity initialization requires gt_depths")
        return np.full(m, d.gt_depths[0], dtype=float)
    if strategy is InitStrategy.RANDOM:
        rng = np.random.default_rng(np.random.SeedSequence(abs(int(seed))))
        lo, hi = RANDOM_DEPTH_RANGE
        return rng.uniform(lo, hi, size=m)
    if strategy is InitStrategy.PREDICTED:
        if d.predicted_depths is None:
            raise DrawingError("predicted initialization requires predicted_depths")
        return np.asarray(d.predicted_depths, dtype=float)
    if strategy is InitStrategy.GT_NOISE:
        if d.gt_depths is None:
            raise DrawingError("gtnoise initialization requires gt_depths")
        rng = np.random.default_rng(np.random.SeedSequence(abs(int(seed))))
        z = np.asarray(d.gt_depths, dtype=float) + rng.normal(0.0, sigma, size=m)
        return np.maximum(z, 1e-3)
    raise ValueError(f"unknown strategy {strategy}")


def solve_system(
    system: EquationSystem,
    z0: np.ndarray,
    config: SolveConfig = SolveConfig(),
    scales: Optional[np.ndarray] = None,
) -> Optional[np.ndarray]:
    """Root of a square system via MINPACK's Powell hybrid (or LM fallback).

    Success requires the scale-normalized residual infinity norm to drop
    below 1e-8 at a finite root; returns None otherwise.  Depths are not
    constrained during iteration.
    """
    m = system.num_vars
    if len(system) != m:
        raise DrawingError(f"system is not square: {len(system)} equations, {m} variables")
    s = np.ones(len(system)) if scales is None else np.asarray(scales, dtype=float)

    def fun(z: np.ndarray) -> np.ndarray:
        return system.residuals(z) / s

    def jac(z: np.ndarray) -> np.ndarray:
        return system.jacobian(z) / s[:, None]

    options = {"maxfev": config.max_iters * (m + 1), "xtol": config.f_tol} if config.method == "hybr" else {
        "maxiter": config.max_iters * (m + 1), "xtol": config.f_tol, "ftol": config.f_tol,
    }
    try:
        result = scipy.optimize.root(fun, z0, jac=jac, method=config.method, options=options)
    except Exception:
        return None
    root = np.asarray(result.x, dtype=float)
    if not np.all(np.isfinite(root)):
        return None
    if float(np.max(np.abs(fun(root)))) >= 1e-8:
        return None
    return root


def ensure_anchor(cands: Sequence[ConstraintCandidate], d: LineDrawing) -> list[ConstraintCandidate]:
    """Return the pool with exactly one anchor, adding a gauge anchor on
    vertex 0 when none is present (true depth if known, else the nominal
    camera distance)."""
    anchors = [c for c in cands if c.kind is ConstraintKind.ANCHOR]
    if len(anchors) > 1:
        raise DrawingError(f"pool has {len(anchors)} anchors, expected at most one")
    if anchors:
        return list(cands)
    value = d.gt_depths[0] if d.gt_depths is not None else d.camera.center_distance
    anchor = ConstraintCandidate(
        ConstraintKind.ANCHOR, (0,), Provenance.SYSTEM, float(value)
    )
    return [anchor] + list(cands)


def _attempt_seed(seed: int, attempt: int, stream: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=abs(int(seed)), spawn_key=(attempt, stream))


def count_satisfied(
    pool: Sequence[ConstraintCandidate],
    d: LineDrawing,
    z: np.ndarray,
    sat_tol: float,
    pool_equations: Optional[Sequence[Sequence]] = None,
) -> int:
    """Candidates of the full pool whose residuals all sit within tolerance.

    Residuals are normalized by a per-equation scale taken at the uniform
    nominal-distance depth vector, so counts are comparable across
    attempts regardless of their initializations.  Roots with any
    non-positive depth are physically invalid and satisfy nothing.
    """
    if not np.all(z > 0):
        return 0
    if pool_equations is None:
        pool_equations = [candidate_equations(c, d) for c in pool]
    z_ref = np.full(d.num_vertices, d.camera.center_distance)
    count = 0
    for equations in pool_equations:
        ok = True
        for eq in equations:
            scale = max(1.0, abs(eq.eval(z_ref)))
            if abs(eq.eval(z)) / scale >= sat_tol:
                ok = False
                break
        if ok:
            count += 1
    return count


def reconstruct(
    d: LineDrawing,
    pool: Sequence[ConstraintCandidate],
    config: SolveConfig = SolveConfig(),
) -> SolveOutcome:
    """Run the select-and-solve loop for the configured restart budget."""
    if not pool:
        raise DrawingError("candidate pool is empty")
    t0 = time.perf_counter()
    pool = ensure_anchor(pool, d)
    pool_equations = [candidate_equations(c, d) for c in pool]
    attempts: list[Attempt] = []
    best: Optional[Attempt] = None
    any_selection = False
    for t in range(config.n_restarts):
        init_seed = _attempt_seed(config.seed, t, 0).generate_state(1)[0]
        order_seed = _attempt_seed(config.seed, t, 1).generate_state(1)[0]
        z0 = make_initial(d, config.init_strategy, int(init_seed), config.init_sigma)
        selection = select_constraints(
            pool, d, z0, int(order_seed), config.selector, pool_equations
        )
        if selection is None:
            attempts.append(Attempt(t, None, z0, None, 0, False))
            continue
        any_selection = True
        root = solve_system(selection.system, z0, config, selection.scales)
        if root is None:
            attempts.append(Attempt(t, selection, z0, None, 0, False))
            continue
        satisfied = count_satisfied(pool, d, root, config.sat_tol, pool_equations)
        attempt = Attempt(t, selection, z0, root, satisfied, True)
        attempts.append(attempt)
        if best is None or satisfied > best.satisfied:
            best = attempt
    elapsed = time.perf_counter() - t0
    if best is not None:
        return SolveOutcome(SolveStatus.SOLVED, best.root, best.satisfied, best.index, attempts, elapsed)
    if any_selection:
        return SolveOutcome(SolveStatus.SOLVER_FAIL, None, 0, None, attempts, elapsed)
    return SolveOutcome(SolveStatus.UNSOLVABLE, None, 0, None, attempts, elapsed)
