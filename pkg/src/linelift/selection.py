"""Incremental selection of a consistent, non-redundant equation subset.

Candidates stream through three gates in order:

  1. structural: the bipartite equation/variable graph must still admit a
     matching saturating every accepted equation (one augmenting-path
     search per candidate, reusing the previous matching);
  2. consistency: the accepted set plus the candidate must reach a
     near-zero least-squares residual from the current estimate;
  3. numerical redundancy: the candidate's gradient must not lie in the
     span of the accepted gradients at the estimate, detected by a
     vanishing trailing diagonal in the QR factorization.

Selection stops once the accepted count reaches the variable count.  The
procedure guarantees solvability of what it accepts, not correctness: a
wrong candidate passes if it is consistent and independent with respect
to everything accepted before it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .drawing import ConstraintCandidate, ConstraintKind, DrawingError, LineDrawing
from .equations import EquationSystem, ResidualEquation, candidate_equations
from .leastsq import gauss_newton

log = logging.getLogger(__name__)


@dataclass
class SelectorConfig:
    consistency_rms_max: float = 1e-7
    qr_diag_min: float = 1e-8
    lsq_max_iters: int = 200


@dataclass
class _PoolEquation:
    equation: ResidualEquation
    scale: float
    coeffs: np.ndarray
    idx: np.ndarray  # (n_monomials, 3), padded with the constant slot


def _compile_equation(eq: ResidualEquation, num_vars: int) -> tuple[np.ndarray, np.ndarray]:
    coeffs, idx = [], []
    for coeff, mono in eq.monomials:
        coeffs.append(coeff)
        idx.append(list(mono) + [num_vars] * (3 - len(mono)))
    if not coeffs:
        return np.zeros(0), np.zeros((0, 3), dtype=int)
    return np.asarray(coeffs, dtype=float), np.asarray(idx, dtype=int)


@dataclass
class SelectionState:
    """Mutable record of the acceptance loop; single-owner, not shared."""

    num_vars: int
    z_est: np.ndarray
    seed: int = 0
    accepted: list[_PoolEquation] = field(default_factory=list)
    matching: dict[int, int] = field(default_factory=dict)  # variable -> accepted position


def _stacked_arrays(members: Sequence[_PoolEquation], num_vars: int):
    coeffs = np.concatenate([m.coeffs for m in members]) if members else np.zeros(0)
    idx = (
        np.concatenate([m.idx for m in members])
        if members
        else np.zeros((0, 3), dtype=int)
    )
    eq_ids = np.concatenate(
        [np.full(len(m.coeffs), k, dtype=int) for k, m in enumerate(members)]
    ) if members else np.zeros(0, dtype=int)
    scales = np.array([m.scale for m in members])
    return coeffs, idx, eq_ids, scales


def _accepted_stack(state: "SelectionState"):
    """Stacked monomial arrays of the accepted set, memoized per size."""
    cache = getattr(state, "_stack_cache", None)
    if cache is not None and cache[0] == len(state.accepted):
        return cache[1]
    arrays = _stacked_arrays(state.accepted, state.num_vars)
    state._stack_cache = (len(state.accepted), arrays)
    return arrays


def _with_candidate(state: "SelectionState", pooled: _PoolEquation):
    coeffs, idx, eq_ids, scales = _accepted_stack(state)
    coeffs = np.concatenate([coeffs, pooled.coeffs])
    idx = np.concatenate([idx, pooled.idx])
    eq_ids = np.concatenate([eq_ids, np.full(len(pooled.coeffs), len(state.accepted), dtype=int)])
    scales = np.append(scales, pooled.scale)
    return coeffs, idx, eq_ids, scales


def _make_system_fns(coeffs, idx, eq_ids, scales, n_eq: int, num_vars: int):
    def residual_fn(z: np.ndarray) -> np.ndarray:
        z_ext = np.append(z, 1.0)
        terms = coeffs * z_ext[idx].prod(axis=1)
        out = np.zeros(n_eq)
        np.add.at(out, eq_ids, terms)
        return out / scales

    def jacobian_fn(z: np.ndarray) -> np.ndarray:
        z_ext = np.append(z, 1.0)
        gathered = z_ext[idx]
        jac = np.zeros((n_eq, num_vars + 1))
        for p in range(3):
            others = coeffs * np.prod(np.delete(gathered, p, axis=1), axis=1)
            np.add.at(jac, (eq_ids, idx[:, p]), others)
        return jac[:, :num_vars] / scales[:, None]

    return residual_fn, jacobian_fn


def _try_augment(
    matching: dict[int, int],
    position: int,
    involved_by_position: dict[int, tuple[int, ...]],
) -> bool:
    """Kuhn augmenting-path step: find a variable for ``position``,
    displacing earlier assignments when an alternating path exists."""

    def visit(pos: int, seen: set[int]) -> bool:
        for var in involved_by_position[pos]:
            if var in seen:
                continue
            seen.add(var)
            holder = matching.get(var)
            if holder is None or visit(holder, seen):
                matching[var] = pos
                return True
        return False

    return visit(position, set())


def _involved_map(state: SelectionState, eq: Optional[ResidualEquation] = None) -> dict:
    involved = {k: m.equation.involved_vertices for k, m in enumerate(state.accepted)}
    if eq is not None:
        involved[len(state.accepted)] = eq.involved_vertices
    return involved


def check_structural(state: SelectionState, eq: ResidualEquation) -> bool:
    """True iff accepted + eq still admits an equation-saturating matching."""
    trial = dict(state.matching)
    return _try_augment(trial, len(state.accepted), _involved_map(state, eq))


def _as_pooled(eq: ResidualEquation, num_vars: int, scale: float) -> _PoolEquation:
    return _PoolEquation(eq, scale, *_compile_equation(eq, num_vars))


def check_consistent(
    state: SelectionState,
    eq: ResidualEquation,
    scale: float = 1.0,
    config: SelectorConfig = SelectorConfig(),
) -> tuple[bool, np.ndarray]:
    """Least-squares solve of accepted + candidate from the current estimate.

    Consistent iff the final RMS of scale-normalized residuals is below
    the configured threshold; returns the minimizer for the state update.
    """
    pooled = _as_pooled(eq, state.num_vars, scale)
    coeffs, idx, eq_ids, scales = _with_candidate(state, pooled)
    n_eq = len(state.accepted) + 1
    residual_fn, jacobian_fn = _make_system_fns(
        coeffs, idx, eq_ids, scales, n_eq, state.num_vars
    )
    # converge far below the acceptance threshold: the redundancy test that
    # follows reads the Jacobian at this point, and rank collapse is only
    # crisp on (not merely near) the solution set
    result = gauss_newton(
        residual_fn,
        jacobian_fn,
        state.z_est,
        max_iters=config.lsq_max_iters,
        rms_tol=1e-13,
        bailout_after=30,
        bailout_rms=config.consistency_rms_max * 50,
    )
    ok = np.isfinite(result.rms) and result.rms < config.consistency_rms_max
    return ok, result.z


def check_not_redundant(
    state: SelectionState,
    eq: ResidualEquation,
    z: np.ndarray,
    config: SelectorConfig = SelectorConfig(),
) -> bool:
    """QR test: the candidate gradient must leave the accepted row span.

    Rows are normalized to unit length first so the threshold is
    meaningful across residuals of different degree and magnitude.
    """
    pooled = _as_pooled(eq, state.num_vars, 1.0)
    coeffs, idx, eq_ids, scales = _with_candidate(state, pooled)
    n_eq = len(state.accepted) + 1
    _, jacobian_fn = _make_system_fns(
        coeffs, idx, eq_ids, np.ones(n_eq), n_eq, state.num_vars
    )
    rows = jacobian_fn(np.asarray(z, dtype=float))
    if float(np.linalg.norm(rows[-1])) < 1e-14:
        return False
    norms = np.linalg.norm(rows, axis=1)
    rows = rows / np.where(norms < 1e-14, 1.0, norms)[:, None]
    r = np.linalg.qr(rows.T, mode="r")
    return abs(float(r[-1, -1])) >= config.qr_diag_min


def _verify_matching(state: SelectionState) -> None:
    positions = sorted(state.matching.values())
    assert positions == list(range(len(state.accepted))), "matching no longer saturates accepted equations"


@dataclass
class Selection:
    """Accepted square system plus the candidates that produced it."""

    system: EquationSystem
    candidates: list[ConstraintCandidate]
    z_est: np.ndarray
    scales: np.ndarray
    seed: int


def select_constraints(
    cands: Sequence[ConstraintCandidate],
    d: LineDrawing,
    z0: np.ndarray,
    seed: int = 0,
    config: SelectorConfig = SelectorConfig(),
    pool_equations: Optional[Sequence[Sequence[ResidualEquation]]] = None,
) -> Optional[Selection]:
    """Stream shuffled candidate equations through the three gates until
    the accepted count equals the vertex count.

    Returns None when the pool is exhausted first (the under-constrained
    outcome).  The anchor candidate is always accepted first; exactly one
    must be present.  ``pool_equations``, aligned with ``cands``, lets a
    caller running many restarts reuse the equation construction.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (d.num_vertices,) or not np.all(z0 > 0):
        raise DrawingError("initial depths must be positive and one per vertex")
    if pool_equations is None:
        pool_equations = [candidate_equations(c, d) for c in cands]
    anchors = [(c, pool_equations[i]) for i, c in enumerate(cands)
               if c.kind is ConstraintKind.ANCHOR]
    if len(anchors) != 1:
        raise DrawingError(f"candidate pool must contain exactly one anchor, got {len(anchors)}")
    others = [(c, pool_equations[i]) for i, c in enumerate(cands)
              if c.kind is not ConstraintKind.ANCHOR]
    rng = np.random.default_rng(np.random.SeedSequence(abs(int(seed))))
    order = list(rng.permutation(len(others)))
    ordered = anchors + [others[i] for i in order]

    m = d.num_vertices
    state = SelectionState(num_vars=m, z_est=z0.copy(), seed=seed)
    selected_candidates: list[ConstraintCandidate] = []
    for cand, equations in ordered:
        if len(state.accepted) >= m:
            break
        cand_used = False
        for eq in equations:
            if len(state.accepted) >= m:
                break
            scale = max(1.0, abs(eq.eval(z0)))
            if not check_structural(state, eq):
                continue
            ok, z_new = check_consistent(state, eq, scale, config)
            if not ok:
                continue
            if not check_not_redundant(state, eq, z_new, config):
                continue
            _try_augment(state.matching, len(state.accepted), _involved_map(state, eq))
            state.accepted.append(_as_pooled(eq, m, scale))
            state.z_est = z_new
            cand_used = True
            _verify_matching(state)
        if cand_used:
            selected_candidates.append(cand)
    if len(state.accepted) < m:
        log.debug("selection exhausted pool with %d/%d equations", len(state.accepted), m)
        return None
    system = EquationSystem([p.equation for p in state.accepted], m)
    scales = np.array([p.scale for p in state.accepted])
    return Selection(system, selected_candidates, state.z_est, scales, seed)
