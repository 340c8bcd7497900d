"""Residual equations over vertex depths, built from constraint candidates.

Every non-anchor constraint becomes one or more polynomial residuals in
the depth variables.  Writing V_i = Z_i * u_i with u_i the back-projection
ray of vertex i, the 3D relations expand into low-degree polynomials:

  perpendicular   dot of the two edge vectors            degree 2
  parallel        three cross-product components         degree 2 (rank 2)
  equal length    difference of squared edge lengths     degree 2
  face planarity  triple products pinning each vertex    degree 3
  anchor          Z_i - a                                linear, inhomogeneous

Residuals are stored as explicit monomial lists, so evaluation and the
Jacobian are exact and the homogeneity degree is known by construction.
The anchor is what makes a system solvable at all: every other residual
vanishes along the ray c*Z of any solution, so absolute scale must be
pinned by one inhomogeneous equation.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .drawing import (
    ConstraintCandidate,
    ConstraintKind,
    DrawingError,
    LineDrawing,
    chord_edges,
)


@dataclass(frozen=True)
class ResidualEquation:
    """One scalar residual f(Z) with its sparse analytic gradient.

    ``monomials`` is a list of (coefficient, vertex-index tuple); the
    residual is the sum of coeff * prod(Z[i] for i in indices).  ``degree``
    is the common monomial degree for homogeneous residuals and None for
    mixed-degree ones (anchors).
    """

    eq_id: int
    source: Optional[ConstraintCandidate]
    monomials: tuple[tuple[float, tuple[int, ...]], ...]
    degree: Optional[int]

    @functools.cached_property
    def involved_vertices(self) -> tuple[int, ...]:
        seen: set[int] = set()
        for _, idx in self.monomials:
            seen.update(idx)
        return tuple(sorted(seen))

    def eval(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=float)
        total = 0.0
        for coeff, idx in self.monomials:
            term = coeff
            for i in idx:
                term *= z[i]
            total += term
        return total

    def grad(self, z: np.ndarray) -> dict[int, float]:
        """Sparse gradient {vertex: d f / d Z_vertex}.

        Differentiating each monomial position separately handles repeated
        indices (d/dZ of Z^2 picks up the factor 2 automatically).
        """
        z = np.asarray(z, dtype=float)
        out: dict[int, float] = {i: 0.0 for i in self.involved_vertices}
        for coeff, idx in self.monomials:
            for p, i in enumerate(idx):
                term = coeff
                for q, j in enumerate(idx):
                    if q != p:
                        term *= z[j]
                out[i] += term
        return out


def _ray(d: LineDrawing, i: int) -> np.ndarray:
    v = d.vertices[i]
    f = d.camera.focal_length
    return np.array([v.x / f, v.y / f, 1.0])


def _prune(monomials: list[tuple[float, tuple[int, ...]]]) -> tuple:
    """Merge duplicate index tuples and drop exact-zero coefficients."""
    acc: dict[tuple[int, ...], float] = {}
    for coeff, idx in monomials:
        key = tuple(sorted(idx))
        acc[key] = acc.get(key, 0.0) + coeff
    return tuple((c, k) for k, c in sorted(acc.items()) if c != 0.0)


def _edge_pair_vertices(cand: ConstraintCandidate, d: LineDrawing) -> tuple[tuple[int, int], tuple[int, int]]:
    chords = chord_edges(d)
    e1, e2 = (chords[i] for i in cand.entities)
    return e1.endpoints, e2.endpoints


def _check_projected_length(d: LineDrawing, endpoints: tuple[int, int]) -> None:
    a, b = endpoints
    va, vb = d.vertices[a], d.vertices[b]
    if (va.x - vb.x) ** 2 + (va.y - vb.y) ** 2 <= 1e-24:
        raise DrawingError(f"edge ({a}, {b}) projects to zero length")


def perpendicular_equations(cand: ConstraintCandidate, d: LineDrawing) -> list[ResidualEquation]:
    """Perpendicularity as the vanishing dot product of the edge vectors.

    For edges sharing one vertex s with far endpoints p and q this is the
    classic quadratic -(V_p - V_s).(V_q - V_s) = 0 written out in the
    depths; for disjoint edges (a,b),(c,d) it is (V_b - V_a).(V_d - V_c) = 0
    with four variables.  Both are degree-2 and have the same zero set as
    the underlying 3D relation.
    """
    if cand.kind is not ConstraintKind.PERPENDICULAR:
        raise DrawingError(f"expected perpendicular candidate, got {cand.kind.value}")
    (a, b), (c, dd) = _edge_pair_vertices(cand, d)
    shared = set((a, b)) & set((c, dd))
    if len(shared) == 2:
        raise DrawingError(f"perpendicular candidate {cand.entities}: edges share both endpoints")
    if len(shared) == 1:
        s = shared.pop()
        p = a if b == s else b
        q = c if dd == s else dd
        # -(V_p - V_s).(V_q - V_s): expands to the standard shared-corner form
        a, b, c, dd, sign = s, p, s, q, -1.0
    else:
        sign = 1.0
    u = {i: _ray(d, i) for i in (a, b, c, dd)}
    dot = lambda i, j: float(u[i] @ u[j])
    monos = _prune([
        (sign * dot(b, dd), (b, dd)),
        (-sign * dot(b, c), (b, c)),
        (-sign * dot(a, dd), (a, dd)),
        (sign * dot(a, c), (a, c)),
    ])
    return [ResidualEquation(0, cand, monos, 2)]


def parallel_equations(cand: ConstraintCandidate, d: LineDrawing) -> list[ResidualEquation]:
    """Three cross-product components of the two edge vectors.

    The cross-product Jacobian has rank 2, so one component is always
    numerically redundant; the selector's QR check drops it, which keeps
    this builder branch-free.
    """
    if cand.kind is not ConstraintKind.PARALLEL:
        raise DrawingError(f"expected parallel candidate, got {cand.kind.value}")
    (a, b), (c, dd) = _edge_pair_vertices(cand, d)
    _check_projected_length(d, (a, b))
    _check_projected_length(d, (c, dd))
    u = {i: _ray(d, i) for i in (a, b, c, dd)}

    def cross(i, j):
        p, q = u[i], u[j]
        return (
            p[1] * q[2] - p[2] * q[1],
            p[2] * q[0] - p[0] * q[2],
            p[0] * q[1] - p[1] * q[0],
        )

    out = []
    for axis in range(3):
        monos = _prune([
            (cross(b, dd)[axis], (b, dd)),
            (-cross(b, c)[axis], (b, c)),
            (-cross(a, dd)[axis], (a, dd)),
            (cross(a, c)[axis], (a, c)),
        ])
        out.append(ResidualEquation(0, cand, monos, 2))
    return out


def equal_length_equations(cand: ConstraintCandidate, d: LineDrawing) -> list[ResidualEquation]:
    """Difference of squared 3D edge lengths."""
    if cand.kind is not ConstraintKind.EQUAL_LENGTH:
        raise DrawingError(f"expected equal-length candidate, got {cand.kind.value}")
    (a, b), (c, dd) = _edge_pair_vertices(cand, d)
    _check_projected_length(d, (a, b))
    _check_projected_length(d, (c, dd))
    u = {i: _ray(d, i) for i in (a, b, c, dd)}
    dot = lambda i, j: float(u[i] @ u[j])
    monos = _prune([
        (dot(b, b), (b, b)),
        (-2.0 * dot(a, b), (a, b)),
        (dot(a, a), (a, a)),
        (-dot(dd, dd), (dd, dd)),
        (2.0 * dot(c, dd), (c, dd)),
        (-dot(c, c), (c, c)),
    ])
    return [ResidualEquation(0, cand, monos, 2)]


def planarity_equations(cand: ConstraintCandidate, d: LineDrawing) -> list[ResidualEquation]:
    """p - 3 triple products pinning vertices 4..p into the plane of the
    first three face vertices.

    If the first three vertices are projectively collinear (their rays are
    coplanar, making every triple product identically degenerate) the pivot
    triple is rotated until a usable one is found.
    """
    if cand.kind is not ConstraintKind.FACE_PLANARITY:
        raise DrawingError(f"expected planarity candidate, got {cand.kind.value}")
    if d.faces is None:
        raise DrawingError("drawing has no faces")
    face = d.faces[cand.entities[0]]
    p = len(face)
    if p < 4:
        return []
    rays = {i: _ray(d, i) for i in face}

    def pivot_ok(i, j, k) -> bool:
        # rays coplanar <=> projections collinear <=> every det with them is 0
        return abs(float(np.linalg.det(np.stack([rays[i], rays[j], rays[k]])))) > 1e-12

    order = list(face)
    pivot = None
    for shift in range(p):
        i, j, k = order[shift], order[(shift + 1) % p], order[(shift + 2) % p]
        if pivot_ok(i, j, k):
            pivot = (i, j, k)
            rest = [order[(shift + 3 + t) % p] for t in range(p - 3)]
            break
    if pivot is None:
        raise DrawingError(f"face {cand.entities[0]}: all vertex triples are projectively collinear")
    v1, v2, v3 = pivot
    out = []
    for vk in rest:
        # det[V2-V1, V3-V1, Vk-V1] expanded over the 2x2x2 sign choices
        monos: list[tuple[float, tuple[int, ...]]] = []
        for i, si in ((v2, 1.0), (v1, -1.0)):
            for j, sj in ((v3, 1.0), (v1, -1.0)):
                for k, sk in ((vk, 1.0), (v1, -1.0)):
                    coeff = si * sj * sk * float(np.linalg.det(np.stack([rays[i], rays[j], rays[k]])))
                    monos.append((coeff, (i, j, k)))
        out.append(ResidualEquation(0, cand, _prune(monos), 3))
    return out


def anchor_equation(cand: ConstraintCandidate) -> ResidualEquation:
    """Gauge-fixing residual Z_i - a.  The one inhomogeneous equation."""
    if cand.kind is not ConstraintKind.ANCHOR:
        raise DrawingError(f"expected anchor candidate, got {cand.kind.value}")
    i = cand.entities[0]
    a = float(cand.anchor_value)
    return ResidualEquation(0, cand, ((1.0, (i,)), (-a, ())), None)


_BUILDERS = {
    ConstraintKind.PERPENDICULAR: perpendicular_equations,
    ConstraintKind.PARALLEL: parallel_equations,
    ConstraintKind.EQUAL_LENGTH: equal_length_equations,
    ConstraintKind.FACE_PLANARITY: planarity_equations,
}


def candidate_equations(cand: ConstraintCandidate, d: LineDrawing) -> list[ResidualEquation]:
    if cand.kind is ConstraintKind.ANCHOR:
        return [anchor_equation(cand)]
    return _BUILDERS[cand.kind](cand, d)


class EquationSystem:
    """Ordered residual equations over a fixed number of depth variables.

    Compiles all monomials into flat arrays once so residual vectors and
    Jacobians evaluate in a few vectorized passes regardless of K.
    """

    def __init__(self, equations: Sequence[ResidualEquation], num_vars: int):
        equations = [
            ResidualEquation(k, eq.source, eq.monomials, eq.degree)
            for k, eq in enumerate(equations)
        ]
        for eq in equations:
            for i in eq.involved_vertices:
                if not 0 <= i < num_vars:
                    raise DrawingError(f"equation {eq.eq_id} references vertex {i} >= {num_vars}")
        self.equations = equations
        self.num_vars = num_vars
        self._compile()

    def _compile(self) -> None:
        max_deg = 3
        coeffs, idx, eq_ids = [], [], []
        for eq in self.equations:
            for coeff, mono in eq.monomials:
                coeffs.append(coeff)
                # pad with the constant-one slot at position num_vars
                idx.append(list(mono) + [self.num_vars] * (max_deg - len(mono)))
                eq_ids.append(eq.eq_id)
        n = len(coeffs)
        self._coeffs = np.asarray(coeffs, dtype=float).reshape(n)
        self._idx = np.asarray(idx, dtype=int).reshape(n, max_deg)
        self._eq_ids = np.asarray(eq_ids, dtype=int).reshape(n)

    def __len__(self) -> int:
        return len(self.equations)

    def residuals(self, z: np.ndarray) -> np.ndarray:
        z_ext = np.append(np.asarray(z, dtype=float), 1.0)
        terms = self._coeffs * z_ext[self._idx].prod(axis=1)
        out = np.zeros(len(self.equations))
        np.add.at(out, self._eq_ids, terms)
        return out

    def jacobian(self, z: np.ndarray) -> np.ndarray:
        z_ext = np.append(np.asarray(z, dtype=float), 1.0)
        gathered = z_ext[self._idx]
        jac = np.zeros((len(self.equations), self.num_vars + 1))
        for p in range(self._idx.shape[1]):
            others = self._coeffs * np.prod(np.delete(gathered, p, axis=1), axis=1)
            np.add.at(jac, (self._eq_ids, self._idx[:, p]), others)
        return jac[:, : self.num_vars]


def build_system(cands: Sequence[ConstraintCandidate], d: LineDrawing) -> EquationSystem:
    """All residual equations of the candidates, in candidate order then
    component order."""
    equations: list[ResidualEquation] = []
    for cand in cands:
        equations.extend(candidate_equations(cand, d))
    return EquationSystem(equations, d.num_vertices)
