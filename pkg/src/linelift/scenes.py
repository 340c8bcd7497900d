"""Synthetic CAD-like scenes: generate, project, and label ground truth.

Five object families (boxes, L-blocks, regular prisms, plates with a
rectangular through-hole, and blocks with a filleted corner) are built in
a model frame, normalized so the bounding-box half-diagonal is 1, posed,
and placed near the nominal camera distance.  Ground-truth constraints
are labeled from the 3D geometry by brute force over all edge pairs,
never from 2D appearance, because most of these relations do not survive
projection.

Filleted blocks contribute circular arcs whose chords run diagonally, so
corpora contain both line-arc perpendicular pairs and oblique directions
that Manhattan-style detectors cannot claim.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .drawing import (
    ArcParams,
    Camera,
    ConstraintCandidate,
    ConstraintKind,
    DrawingError,
    Edge,
    EdgeKind,
    LineDrawing,
    Provenance,
    Vertex2D,
    project,
    save_drawing,
)

VIEW_MIN_VERTEX_SEP = 1e-4
LABEL_TOL = 1e-9


class Family(Enum):
    CUBOID = "cuboid"
    LBLOCK = "lblock"
    NPRISM = "nprism"
    HOLE_PLATE = "hole_plate"
    FILLETED_BLOCK = "filleted_block"


DEFAULT_FAMILY_WEIGHTS: dict[Family, float] = {
    Family.CUBOID: 0.40,
    Family.LBLOCK: 0.15,
    Family.NPRISM: 0.15,
    Family.HOLE_PLATE: 0.25,
    Family.FILLETED_BLOCK: 0.05,
}

MANHATTAN_FAMILIES = (Family.CUBOID, Family.LBLOCK, Family.HOLE_PLATE)
OBLIQUE_FAMILIES = (Family.FILLETED_BLOCK, Family.NPRISM)


@dataclass(frozen=True)
class SceneSpec:
    family: Family
    size_params: tuple[float, ...]
    rotation: tuple[float, float, float]  # Euler angles, radians
    translation: tuple[float, float, float]
    seed: int
    disconnected: bool = False


@dataclass
class _Edge3D:
    kind: EdgeKind
    endpoints: tuple[int, int]
    arc_center: Optional[np.ndarray] = None
    arc_mid: Optional[np.ndarray] = None


@dataclass
class _Scene3D:
    points: np.ndarray  # (n, 3)
    edges: list[_Edge3D]
    faces: list[tuple[int, ...]]


class SceneGenerationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Family builders (model frame, sizes as given; normalization comes later)


def _build_cuboid(a: float, b: float, c: float) -> _Scene3D:
    xs, ys, zs = a / 2, b / 2, c / 2
    pts = np.array([
        [sx * xs, sy * ys, sz * zs]
        for sz in (-1, 1) for sy in (-1, 1) for sx in (-1, 1)
    ], dtype=float)
    # bottom ring, top ring, verticals
    ring = [(0, 1), (1, 3), (3, 2), (2, 0)]
    edges = [_Edge3D(EdgeKind.SEGMENT, e) for e in ring]
    edges += [_Edge3D(EdgeKind.SEGMENT, (a0 + 4, b0 + 4)) for a0, b0 in ring]
    edges += [_Edge3D(EdgeKind.SEGMENT, (i, i + 4)) for i in range(4)]
    faces = [
        (0, 1, 3, 2), (4, 5, 7, 6),
        (0, 1, 5, 4), (2, 3, 7, 6),
        (0, 2, 6, 4), (1, 3, 7, 5),
    ]
    return _Scene3D(pts, edges, faces)


def _extrude_polygon(poly: np.ndarray, height: float) -> _Scene3D:
    """Prism over a simple polygon: bottom ring 0..n-1, top ring n..2n-1."""
    n = len(poly)
    bottom = np.column_stack([poly, np.full(n, -height / 2)])
    top = np.column_stack([poly, np.full(n, height / 2)])
    pts = np.vstack([bottom, top])
    edges = [_Edge3D(EdgeKind.SEGMENT, (i, (i + 1) % n)) for i in range(n)]
    edges += [_Edge3D(EdgeKind.SEGMENT, (n + i, n + (i + 1) % n)) for i in range(n)]
    edges += [_Edge3D(EdgeKind.SEGMENT, (i, n + i)) for i in range(n)]
    faces = [tuple(range(n)), tuple(range(n, 2 * n))]
    faces += [(i, (i + 1) % n, n + (i + 1) % n, n + i) for i in range(n)]
    return _Scene3D(pts, edges, faces)


def _build_lblock(a: float, b: float, cut_a: float, cut_b: float, h: float) -> _Scene3D:
    poly = np.array([
        [0.0, 0.0], [a, 0.0], [a, b - cut_b], [a - cut_a, b - cut_b],
        [a - cut_a, b], [0.0, b],
    ])
    poly -= poly.mean(axis=0)
    return _extrude_polygon(poly, h)


def _build_nprism(n: int, radius: float, h: float) -> _Scene3D:
    angles = 2 * np.pi * np.arange(n) / n
    poly = radius * np.column_stack([np.cos(angles), np.sin(angles)])
    return _extrude_polygon(poly, h)


def _build_hole_plate(a: float, b: float, ha: float, hb: float,
                      ox: float, oy: float, h: float) -> _Scene3D:
    outer = _build_cuboid(a, b, h)
    inner = _build_cuboid(ha, hb, h)
    pts = np.vstack([outer.points, inner.points + np.array([ox, oy, 0.0])])
    edges = list(outer.edges)
    edges += [_Edge3D(e.kind, (e.endpoints[0] + 8, e.endpoints[1] + 8)) for e in inner.edges]
    # top and bottom are annuli (not vertex cycles); keep the side quads only
    faces = [outer.faces[i] for i in range(2, 6)]
    faces += [tuple(v + 8 for v in inner.faces[i]) for i in range(2, 6)]
    return _Scene3D(pts, edges, faces)


def _build_filleted_block(a: float, b: float, c: float, r: float) -> _Scene3D:
    xs, ys, zs = a / 2, b / 2, c / 2
    # corner (+x, +y) is filleted; two arc endpoints replace it on each face
    base = [
        [-xs, -ys], [xs, -ys], [-xs, ys],        # intact corners
        [xs - r, ys],                            # arc endpoint on the y = +ys wall
        [xs, ys - r],                            # arc endpoint on the x = +xs wall
    ]
    pts = np.array(
        [[x, y, -zs] for x, y in base] + [[x, y, zs] for x, y in base], dtype=float
    )
    center = np.array([xs - r, ys - r])
    mid2 = center + (r / math.sqrt(2.0)) * np.array([1.0, 1.0])

    def ring(o: int, z: float) -> list[_Edge3D]:
        return [
            _Edge3D(EdgeKind.SEGMENT, (o + 0, o + 1)),
            _Edge3D(EdgeKind.SEGMENT, (o + 1, o + 4)),
            _Edge3D(
                EdgeKind.ARC, (o + 3, o + 4),
                arc_center=np.array([center[0], center[1], z]),
                arc_mid=np.array([mid2[0], mid2[1], z]),
            ),
            _Edge3D(EdgeKind.SEGMENT, (o + 2, o + 3)),
            _Edge3D(EdgeKind.SEGMENT, (o + 0, o + 2)),
        ]

    edges = ring(0, -zs) + ring(5, zs)
    edges += [_Edge3D(EdgeKind.SEGMENT, (i, i + 5)) for i in range(5)]
    faces = [
        (0, 1, 4, 3, 2), (5, 6, 9, 8, 7),
        (0, 1, 6, 5), (1, 4, 9, 6), (2, 3, 8, 7), (0, 2, 7, 5),
    ]
    return _Scene3D(pts, edges, faces)


def _build_scene(spec: SceneSpec) -> _Scene3D:
    p = spec.size_params
    if spec.family is Family.CUBOID:
        scene = _build_cuboid(*p)
    elif spec.family is Family.LBLOCK:
        scene = _build_lblock(*p)
    elif spec.family is Family.NPRISM:
        scene = _build_nprism(int(p[0]), p[1], p[2])
    elif spec.family is Family.HOLE_PLATE:
        scene = _build_hole_plate(*p)
    elif spec.family is Family.FILLETED_BLOCK:
        scene = _build_filleted_block(*p)
    else:
        raise ValueError(f"unknown family {spec.family}")
    if spec.disconnected:
        scene = _add_disjoint_part(scene, spec)
    return scene


def _add_disjoint_part(scene: _Scene3D, spec: SceneSpec) -> _Scene3D:
    """Attach a second, obliquely rotated box far enough to stay disjoint.

    The oblique rotation keeps the parts from sharing any parallel,
    perpendicular, or equal-length relation, so nothing in the pool can
    tie the relative scale of the two components together.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=spec.seed, spawn_key=(77,)))
    part = _build_cuboid(*(0.5 + 0.5 * rng.random(3)))
    rot = _euler_matrix(0.9 + 0.3 * rng.random(), 0.7 + 0.3 * rng.random(), 0.5 + 0.3 * rng.random())
    span = scene.points[:, 0].max() - scene.points[:, 0].min()
    offset = np.array([span + 1.5, 0.0, 0.0])
    pts = np.vstack([scene.points, part.points @ rot.T + offset])
    base = len(scene.points)
    edges = list(scene.edges)
    for e in part.edges:
        edges.append(_Edge3D(e.kind, (e.endpoints[0] + base, e.endpoints[1] + base)))
    faces = list(scene.faces) + [tuple(v + base for v in f) for f in part.faces]
    return _Scene3D(pts, edges, faces)


# ---------------------------------------------------------------------------
# Posing, projection, labeling


def _euler_matrix(ax: float, ay: float, az: float) -> np.ndarray:
    """Tilt about x, then y, then spin about the viewing axis."""
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


# Tilts that put the viewing axis near the object's body diagonal.  Under
# the narrow field of view used here, such poses keep projections of
# parallel segments within a few degrees of each other, which is what
# makes the classical angle-threshold detector viable at all.
BASE_TILT_X = math.pi / 4
BASE_TILT_Y = -0.6155
TILT_JITTER = 0.10

# View presets for corpus sampling.  Isometric views show every axis
# equally and are the friendly regime for angle-threshold detection;
# shallow views look nearly face-on at a thin part, which is where a
# flat depth initialization is genuinely close to the truth.  The mixed
# default gives thin boxes the shallow treatment and everything else the
# isometric one, mirroring the plate-plus-solid variety of CAD drawings.
VIEW_PRESETS = ("mixed", "isometric", "shallow")
SHALLOW_DEPTH_RANGE = (0.08, 0.16)
SHALLOW_TILT_RANGE = (0.04, 0.10)


def _normalize(scene: _Scene3D) -> _Scene3D:
    lo = scene.points.min(axis=0)
    hi = scene.points.max(axis=0)
    center = (lo + hi) / 2
    half_diag = float(np.linalg.norm((hi - lo) / 2))
    if half_diag <= 0:
        raise SceneGenerationError("degenerate scene: zero bounding box")
    s = 1.0 / half_diag

    def tx(p: np.ndarray) -> np.ndarray:
        return (p - center) * s

    edges = [
        _Edge3D(
            e.kind,
            e.endpoints,
            None if e.arc_center is None else tx(e.arc_center),
            None if e.arc_mid is None else tx(e.arc_mid),
        )
        for e in scene.edges
    ]
    return _Scene3D(tx(scene.points), edges, scene.faces)


def _pose(scene: _Scene3D, rotation, translation) -> _Scene3D:
    rot = _euler_matrix(*rotation)
    t = np.asarray(translation, dtype=float)

    def tx(p: np.ndarray) -> np.ndarray:
        return p @ rot.T + t

    edges = [
        _Edge3D(
            e.kind,
            e.endpoints,
            None if e.arc_center is None else tx(e.arc_center),
            None if e.arc_mid is None else tx(e.arc_mid),
        )
        for e in scene.edges
    ]
    return _Scene3D(tx(scene.points), edges, scene.faces)


def _view_is_generic(scene: _Scene3D, camera: Camera) -> bool:
    pts = scene.points
    if pts[:, 2].min() <= 0.5:
        return False
    proj = np.column_stack([
        camera.focal_length * pts[:, 0] / pts[:, 2],
        camera.focal_length * pts[:, 1] / pts[:, 2],
    ])
    n = len(proj)
    diff = proj[:, None, :] - proj[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    if (dist + np.eye(n)).min() < VIEW_MIN_VERTEX_SEP:
        return False
    for e in scene.edges:
        a, b = e.endpoints
        if np.linalg.norm(proj[a] - proj[b]) < VIEW_MIN_VERTEX_SEP:
            return False
        if e.kind is EdgeKind.ARC:
            if e.arc_mid[2] <= 0.5 or e.arc_center[2] <= 0.5:
                return False
            mid = np.array(project(e.arc_mid, camera))
            u, v = proj[b] - proj[a], mid - proj[a]
            if abs(float(u[0] * v[1] - u[1] * v[0])) < 1e-6:
                return False
    return True


def _chord_dirs_and_lengths(scene: _Scene3D) -> tuple[np.ndarray, np.ndarray]:
    dirs, lengths = [], []
    for e in scene.edges:
        v = scene.points[e.endpoints[1]] - scene.points[e.endpoints[0]]
        length = float(np.linalg.norm(v))
        dirs.append(v / length)
        lengths.append(length)
    return np.array(dirs), np.array(lengths)


def label_constraints(scene: _Scene3D) -> list[ConstraintCandidate]:
    """Brute-force ground-truth labels over all chord pairs plus faces."""
    dirs, lengths = _chord_dirs_and_lengths(scene)
    n = len(scene.edges)
    cands: list[ConstraintCandidate] = []
    for i in range(n):
        for j in range(i + 1, n):
            cross = float(np.linalg.norm(np.cross(dirs[i], dirs[j])))
            dot = abs(float(dirs[i] @ dirs[j]))
            if cross < LABEL_TOL:
                cands.append(ConstraintCandidate(
                    ConstraintKind.PARALLEL, (i, j), Provenance.GROUND_TRUTH))
            if dot < LABEL_TOL:
                cands.append(ConstraintCandidate(
                    ConstraintKind.PERPENDICULAR, (i, j), Provenance.GROUND_TRUTH))
            if abs(lengths[i] - lengths[j]) < LABEL_TOL * max(lengths[i], lengths[j]):
                cands.append(ConstraintCandidate(
                    ConstraintKind.EQUAL_LENGTH, (i, j), Provenance.GROUND_TRUTH))
    for k, face in enumerate(scene.faces):
        if len(face) >= 4:
            cands.append(ConstraintCandidate(
                ConstraintKind.FACE_PLANARITY, (k,), Provenance.GROUND_TRUTH))
    return cands


def generate_scene(
    spec: SceneSpec, camera: Camera = Camera()
) -> tuple[LineDrawing, np.ndarray, list[ConstraintCandidate]]:
    """Build, pose, and project one scene; retries perturbed poses until
    the view is generic (up to 100 attempts)."""
    base = _normalize(_build_scene(spec))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=abs(spec.seed), spawn_key=(11,)))
    rotation = np.asarray(spec.rotation, dtype=float)
    translation = np.asarray(spec.translation, dtype=float)
    posed = None
    for _ in range(100):
        trial = _pose(base, rotation, translation)
        if _view_is_generic(trial, camera):
            posed = trial
            break
        rotation = rotation + rng.uniform(-0.05, 0.05, size=3)
        translation = translation + rng.uniform(-0.02, 0.02, size=3)
    if posed is None:
        raise SceneGenerationError(f"no generic view found in 100 attempts for seed {spec.seed}")

    gt_depths = posed.points[:, 2].copy()
    vertices = tuple(
        Vertex2D(*project(p, camera), index=i) for i, p in enumerate(posed.points)
    )
    edges = []
    for j, e in enumerate(posed.edges):
        if e.kind is EdgeKind.ARC:
            arc = ArcParams(project(e.arc_center, camera), project(e.arc_mid, camera))
            edges.append(Edge(EdgeKind.ARC, e.endpoints, j, arc))
        else:
            edges.append(Edge(EdgeKind.SEGMENT, e.endpoints, j))
    cands = label_constraints(posed)
    cands.append(ConstraintCandidate(
        ConstraintKind.ANCHOR, (0,), Provenance.GROUND_TRUTH, float(gt_depths[0])))
    drawing = LineDrawing(
        vertices, tuple(edges), camera, tuple(tuple(f) for f in posed.faces),
        tuple(float(z) for z in gt_depths), tuple(cands),
    )
    return drawing, gt_depths, cands


# ---------------------------------------------------------------------------
# Random specs and corpus generation


def random_spec(
    family: Family,
    seed: int,
    disconnected: bool = False,
    view: str = "mixed",
) -> SceneSpec:
    if view not in VIEW_PRESETS:
        raise ValueError(f"unknown view preset {view!r}")
    rng = np.random.default_rng(np.random.SeedSequence(abs(int(seed))))

    def u(lo, hi):
        return float(rng.uniform(lo, hi))

    # thin boxes carry the near-face-on views; extruded solids stay
    # near-isometric where their depth structure is well observed
    shallow = view == "shallow" or (view == "mixed" and family is Family.CUBOID)
    depth = u(*SHALLOW_DEPTH_RANGE) if shallow else None

    if family is Family.CUBOID:
        params = (u(0.9, 1.5), u(0.9, 1.5), depth if shallow else u(0.6, 1.4))
    elif family is Family.LBLOCK:
        a, b = u(1.0, 1.6), u(1.0, 1.6)
        params = (a, b, u(0.35, 0.6) * a, u(0.35, 0.6) * b, depth if shallow else u(0.5, 1.0))
    elif family is Family.NPRISM:
        n = int(rng.choice([6, 8]))
        params = (float(n), u(0.6, 1.0), depth if shallow else u(0.6, 1.4))
    elif family is Family.HOLE_PLATE:
        a, b = u(1.2, 1.8), u(1.2, 1.8)
        ha, hb = u(0.3, 0.45) * a, u(0.3, 0.45) * b
        ox = u(-0.15, 0.15) * (a - ha)
        oy = u(-0.15, 0.15) * (b - hb)
        params = (a, b, ha, hb, ox, oy, depth if shallow else u(0.35, 0.7))
    elif family is Family.FILLETED_BLOCK:
        a, b = u(0.9, 1.4), u(0.9, 1.4)
        params = (a, b, depth if shallow else u(0.6, 1.2), u(0.25, 0.42) * min(a, b))
    else:
        raise ValueError(f"unknown family {family}")

    if shallow:
        rotation = (
            u(*SHALLOW_TILT_RANGE) * (1 if rng.random() < 0.5 else -1),
            u(*SHALLOW_TILT_RANGE) * (1 if rng.random() < 0.5 else -1),
            u(-math.pi, math.pi),
        )
    else:
        rotation = (
            BASE_TILT_X + u(-TILT_JITTER, TILT_JITTER),
            BASE_TILT_Y + u(-TILT_JITTER, TILT_JITTER),
            u(-math.pi, math.pi),
        )
    translation = (u(-0.15, 0.15), u(-0.15, 0.15), 6.0 + u(-0.25, 0.25))
    return SceneSpec(family, params, rotation, translation, int(seed), disconnected)


def _family_counts(n: int, weights: dict[Family, float]) -> dict[Family, int]:
    """Largest-remainder apportionment of n scenes over family weights."""
    total = sum(weights.values())
    quotas = {fam: n * w / total for fam, w in weights.items()}
    counts = {fam: int(math.floor(q)) for fam, q in quotas.items()}
    leftover = n - sum(counts.values())
    by_remainder = sorted(
        weights, key=lambda fam: (-(quotas[fam] - counts[fam]), fam.value)
    )
    for fam in by_remainder[:leftover]:
        counts[fam] += 1
    return counts


def generate_corpus(
    n: int,
    seed: int,
    out_dir: Union[str, Path],
    weights: Optional[dict[Family, float]] = None,
    allow_disconnected: bool = False,
    disconnected_fraction: float = 0.05,
    view: str = "mixed",
    camera: Camera = Camera(),
) -> dict:
    """Write n interchange documents plus a manifest; deterministic per seed."""
    if n < 1:
        raise ValueError("corpus size must be at least 1")
    weights = dict(weights or DEFAULT_FAMILY_WEIGHTS)
    counts = _family_counts(n, weights)
    families: list[Family] = []
    for fam in sorted(counts, key=lambda f: f.value):
        families.extend([fam] * counts[fam])
    rng = np.random.default_rng(np.random.SeedSequence(abs(int(seed))))
    order = rng.permutation(n)
    families = [families[i] for i in order]
    n_disjoint = int(round(n * disconnected_fraction)) if allow_disconnected else 0
    disjoint_set = set(range(n)[:n_disjoint])

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i in range(n):
        spec = random_spec(families[i], seed + i, disconnected=i in disjoint_set, view=view)
        drawing, _, _ = generate_scene(spec, camera)
        name = f"scene_{i:05d}.json"
        save_drawing(drawing, out / name)
        entries.append({
            "file": name,
            "family": families[i].value,
            "connected": not spec.disconnected,
            "vertices": drawing.num_vertices,
            "edges": drawing.num_edges,
        })
    manifest = {
        "seed": int(seed),
        "count": n,
        "view": view,
        "family_counts": {fam.value: counts[fam] for fam in sorted(counts, key=lambda f: f.value)},
        "disconnected": n_disjoint,
        "entries": entries,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest
