"""Classical constraint detectors and prediction ingestion.

Three baselines produce candidate pairs from a drawing: angle-threshold
heuristics, vanishing-point clustering (J-Linkage), and an iterative
reweighted refinement seeded by baseline depths.  Arcs are replaced by
their chords before any detector runs; a line perpendicular to an arc is
perpendicular to the arc's chord, and depths only ever attach to the
chord endpoints anyway.

Externally predicted constraints enter through the symmetry filter: a
pair is kept only when each edge appears in the other's predicted
relation sequence.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .drawing import (
    ConstraintCandidate,
    ConstraintKind,
    LineDrawing,
    Provenance,
    chord_edges,
)
from .equations import EquationSystem, candidate_equations
from .leastsq import gauss_newton

log = logging.getLogger(__name__)


@dataclass
class JLinkageConfig:
    num_hypotheses: int = 500
    consistency_threshold_deg: float = 2.0
    seed: int = 0


@dataclass
class True2FormConfig:
    constraint_weight: float = 1.0
    sigma_alpha_deg: float = 10.0
    max_iters: int = 4


@dataclass
class DetectorConfig:
    parallel_angle_max_deg: float = 15.0
    perpendicular_angle_min_deg: float = 20.0
    jlinkage: JLinkageConfig = field(default_factory=JLinkageConfig)
    true2form: True2FormConfig = field(default_factory=True2FormConfig)

    def __post_init__(self):
        if not 0 < self.parallel_angle_max_deg < self.perpendicular_angle_min_deg < 90:
            raise ValueError(
                "thresholds must satisfy 0 < parallel max < perpendicular min < 90, got "
                f"{self.parallel_angle_max_deg} and {self.perpendicular_angle_min_deg}"
            )


def _chord_geometry(d: LineDrawing):
    """Per-edge 2D endpoints, directions, midpoints; None for degenerate."""
    pts = d.points2d()
    rows = []
    for e in chord_edges(d):
        a, b = e.endpoints
        vec = pts[b] - pts[a]
        norm = float(np.linalg.norm(vec))
        if norm < 1e-12:
            log.warning("edge %d projects to zero length; skipped by detectors", e.index)
            rows.append(None)
            continue
        rows.append((pts[a], pts[b], vec / norm, (pts[a] + pts[b]) / 2))
    return rows


def _acute_angle_deg(d1: np.ndarray, d2: np.ndarray) -> float:
    c = abs(float(d1 @ d2)) / (float(np.linalg.norm(d1)) * float(np.linalg.norm(d2)))
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def detect_heuristic(d: LineDrawing, cfg: DetectorConfig = DetectorConfig()) -> list[ConstraintCandidate]:
    """Angle thresholds on projected chord directions.

    Near-parallel projections are called parallel; every pair beyond the
    perpendicular threshold is called perpendicular, which deliberately
    over-generates exactly like the classical rule it reproduces.
    """
    geo = _chord_geometry(d)
    out = []
    for i, j in combinations(range(d.num_edges), 2):
        if geo[i] is None or geo[j] is None:
            continue
        theta = _acute_angle_deg(geo[i][2], geo[j][2])
        if theta <= cfg.parallel_angle_max_deg:
            out.append(ConstraintCandidate(ConstraintKind.PARALLEL, (i, j), Provenance.HEURISTIC))
        elif theta > cfg.perpendicular_angle_min_deg:
            out.append(ConstraintCandidate(ConstraintKind.PERPENDICULAR, (i, j), Provenance.HEURISTIC))
    return out


# ---------------------------------------------------------------------------
# J-Linkage vanishing-point clustering


def _homogeneous_line(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    line = np.cross(np.append(pa, 1.0), np.append(pb, 1.0))
    n = float(np.linalg.norm(line[:2]))
    return line / n if n > 0 else line


def _prefers(geo_row, hyp: np.ndarray, cos_min: float) -> bool:
    """A line prefers a hypothesis point when the direction from its
    midpoint to the point (homogeneous, so points at infinity work)
    aligns with the line within the consistency threshold."""
    _, _, direction, mid = geo_row
    v = np.array([hyp[0] - mid[0] * hyp[2], hyp[1] - mid[1] * hyp[2]])
    norm = float(np.linalg.norm(v))
    if norm < 1e-12:
        return True
    return abs(float(direction @ v)) / norm >= cos_min


def _jaccard_distance(a: np.ndarray, b: np.ndarray) -> float:
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return 1.0 - int(np.count_nonzero(a & b)) / union


def _fit_vp(lines: Sequence[np.ndarray]) -> np.ndarray:
    """Common point of a line bundle: smallest right singular vector."""
    mat = np.stack(lines)
    _, _, vt = np.linalg.svd(mat)
    return vt[-1]


def detect_jlinkage(d: LineDrawing, cfg: DetectorConfig = DetectorConfig()) -> list[ConstraintCandidate]:
    """Vanishing-point clustering: parallel groups, then the most
    orthogonal VP triple for perpendicular pairs.

    Hypothesis sampling is keyed to a geometric canonical ordering of the
    edges, so the result is invariant to permutations of the edge list.
    """
    jcfg = cfg.jlinkage
    geo = _chord_geometry(d)
    usable = [i for i in range(d.num_edges) if geo[i] is not None]
    if len(usable) < 2:
        return []
    # canonical geometric order makes sampling independent of edge indexing
    key = lambda i: tuple(sorted([tuple(geo[i][0]), tuple(geo[i][1])]))
    canon = sorted(usable, key=key)
    lines = {i: _homogeneous_line(geo[i][0], geo[i][1]) for i in usable}

    pair_list = list(combinations(range(len(canon)), 2))
    rng = np.random.default_rng(np.random.SeedSequence(abs(int(jcfg.seed))))
    draws = rng.integers(0, len(pair_list), size=jcfg.num_hypotheses)
    cos_min = math.cos(math.radians(jcfg.consistency_threshold_deg))
    hypotheses = []
    for t in draws:
        ci, cj = pair_list[int(t)]
        h = np.cross(lines[canon[ci]], lines[canon[cj]])
        if float(np.linalg.norm(h)) < 1e-12:
            continue  # identical projected lines
        hypotheses.append(h)
    if not hypotheses:
        return []

    pref = np.zeros((len(canon), len(hypotheses)), dtype=bool)
    for r, i in enumerate(canon):
        for c, h in enumerate(hypotheses):
            pref[r, c] = _prefers(geo[i], h, cos_min)

    clusters: list[tuple[list[int], np.ndarray]] = [([r], pref[r]) for r in range(len(canon))]
    while len(clusters) > 1:
        best = None
        for a, b in combinations(range(len(clusters)), 2):
            dist = _jaccard_distance(clusters[a][1], clusters[b][1])
            if dist < 1.0 and (best is None or dist < best[0]):
                best = (dist, a, b)
        if best is None:
            break
        _, a, b = best
        merged = (clusters[a][0] + clusters[b][0], clusters[a][1] & clusters[b][1])
        clusters = [c for k, c in enumerate(clusters) if k not in (a, b)] + [merged]
        clusters.sort(key=lambda c: min(c[0]))

    out: list[ConstraintCandidate] = []
    groups = []
    for members, _ in clusters:
        edge_ids = sorted(canon[r] for r in members)
        if len(edge_ids) >= 2:
            groups.append(edge_ids)
            for i, j in combinations(edge_ids, 2):
                out.append(ConstraintCandidate(ConstraintKind.PARALLEL, (i, j), Provenance.JLINKAGE))

    if len(groups) >= 3:
        f = d.camera.focal_length
        dirs = []
        for edge_ids in groups:
            vp = _fit_vp([lines[i] for i in edge_ids])
            v = np.array([vp[0], vp[1], f * vp[2]])
            dirs.append(v / float(np.linalg.norm(v)))
        best_triple, best_score = None, None
        for triple in combinations(range(len(groups)), 3):
            score = max(
                abs(float(dirs[a] @ dirs[b])) for a, b in combinations(triple, 2)
            )
            if best_score is None or score < best_score:
                best_triple, best_score = triple, score
        if best_score is not None and best_score <= 0.3:
            for ga, gb in combinations(best_triple, 2):
                for i in groups[ga]:
                    for j in groups[gb]:
                        out.append(ConstraintCandidate(
                            ConstraintKind.PERPENDICULAR, (i, j), Provenance.JLINKAGE))
    return out


# ---------------------------------------------------------------------------
# Iterative reweighted refinement (baseline-reconstruction detector)


def _deviation_angles_deg(d: LineDrawing, z: np.ndarray, pairs, kind: ConstraintKind) -> np.ndarray:
    rays = d.ray_directions()
    chords = chord_edges(d)
    pts = rays * z[:, None]
    out = np.empty(len(pairs))
    for k, (i, j) in enumerate(pairs):
        a, b = chords[i].endpoints
        c, dd = chords[j].endpoints
        v1 = pts[b] - pts[a]
        v2 = pts[dd] - pts[c]
        denom = float(np.linalg.norm(v1)) * float(np.linalg.norm(v2))
        if denom < 1e-15:
            out[k] = 90.0
            continue
        angle = math.degrees(math.acos(min(1.0, abs(float(v1 @ v2)) / denom)))
        out[k] = angle if kind is ConstraintKind.PARALLEL else abs(90.0 - angle)
    return out


def detect_true2form(
    d: LineDrawing,
    z0: np.ndarray,
    cfg: DetectorConfig = DetectorConfig(),
) -> list[ConstraintCandidate]:
    """Refine baseline depths under likelihood-weighted constraints, one
    relation type at a time, and accept pairs that end up within the
    angular tolerance.

    Each round minimizes the squared departure from the baseline plus the
    weighted squared constraint residuals, with Gaussian weights in the
    current deviation angle.  A zero constraint weight degenerates to
    judging the baseline geometry as-is.
    """
    tcfg = cfg.true2form
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (d.num_vertices,) or not np.all(z0 > 0):
        raise ValueError("baseline depths must be positive, one per vertex")
    geo = _chord_geometry(d)
    pairs = [
        (i, j) for i, j in combinations(range(d.num_edges), 2)
        if geo[i] is not None and geo[j] is not None
    ]
    sigma = tcfg.sigma_alpha_deg
    accepted: list[ConstraintCandidate] = []
    z_base = z0.copy()
    z = z0.copy()
    for kind in (ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR):
        if not pairs:
            break
        cands = [ConstraintCandidate(kind, p, Provenance.TRUE2FORM) for p in pairs]
        equations = []
        owner = []
        for idx, cand in enumerate(cands):
            for eq in candidate_equations(cand, d):
                equations.append(eq)
                owner.append(idx)
        system = EquationSystem(equations, d.num_vertices)
        owner = np.asarray(owner)
        scales = np.maximum(1.0, np.abs(system.residuals(z_base)))
        m = d.num_vertices
        eye = np.eye(m)
        for _ in range(max(1, tcfg.max_iters)):
            alphas = _deviation_angles_deg(d, z, pairs, kind)
            weights = np.exp(-(alphas ** 2) / (2.0 * sigma ** 2))
            row_w = np.sqrt(tcfg.constraint_weight * weights[owner])

            def residual_fn(zz: np.ndarray) -> np.ndarray:
                return np.concatenate([zz - z_base, row_w * system.residuals(zz) / scales])

            def jacobian_fn(zz: np.ndarray) -> np.ndarray:
                return np.vstack([eye, row_w[:, None] * system.jacobian(zz) / scales[:, None]])

            result = gauss_newton(residual_fn, jacobian_fn, z, max_iters=100, rms_tol=1e-12)
            if not np.all(np.isfinite(result.z)):
                log.warning("refinement diverged; returning pairs accepted so far")
                return accepted
            step = float(np.max(np.abs(result.z - z)))
            z = result.z
            if step < 1e-10:
                break
        final_alphas = _deviation_angles_deg(d, z, pairs, kind)
        for cand, alpha in zip(cands, final_alphas):
            if alpha < sigma:
                accepted.append(cand)
    return accepted


# ---------------------------------------------------------------------------
# Prediction ingestion and scoring


def symmetry_filter(
    pred: Mapping[int, Sequence[int]],
    kind: ConstraintKind,
    provenance: Provenance = Provenance.PREDICTED,
) -> list[ConstraintCandidate]:
    """Keep only mutually predicted pairs: j in g(i) and i in g(j), i != j."""
    out = []
    seen = set()
    for i, related in sorted(pred.items()):
        for j in related:
            if i == j:
                continue
            pair = (min(i, j), max(i, j))
            if pair in seen:
                continue
            if i in pred.get(j, ()) and j in pred.get(i, ()):
                seen.add(pair)
                out.append(ConstraintCandidate(kind, pair, provenance))
    return out


@dataclass(frozen=True)
class DetectionScore:
    precision: float
    recall: float
    f1: float


def score_detection(
    pred: Iterable[ConstraintCandidate],
    gt: Iterable[ConstraintCandidate],
) -> DetectionScore:
    """Set-based precision/recall/F1 over (kind, edge-pair) identities."""
    pred_set = set(pred)
    gt_set = set(gt)
    tp = len(pred_set & gt_set)
    if pred_set:
        precision = tp / len(pred_set)
    else:
        precision = 1.0 if not gt_set else 0.0
    recall = tp / len(gt_set) if gt_set else 1.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return DetectionScore(precision, recall, f1)
