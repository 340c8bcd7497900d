import math

import numpy as np
import pytest

from linelift.drawing import (
    Camera,
    ConstraintCandidate,
    ConstraintKind,
    Edge,
    EdgeKind,
    LineDrawing,
    Provenance,
    Vertex2D,
    project,
)
from linelift.scenes import Family, SceneSpec, generate_scene


@pytest.fixture(scope="session")
def cuboid_scene():
    """Deterministic posed cuboid with full ground truth."""
    spec = SceneSpec(
        Family.CUBOID, (1.0, 1.2, 0.8),
        rotation=(0.35, 0.45, 0.9), translation=(0.1, -0.05, 6.0), seed=5,
    )
    return generate_scene(spec)


@pytest.fixture(scope="session")
def axis_aligned_cuboid():
    """Cuboid in the identity pose (generic under perspective)."""
    spec = SceneSpec(
        Family.CUBOID, (1.0, 1.2, 0.8),
        rotation=(0.0, 0.0, 0.0), translation=(0.0, 0.0, 6.0), seed=1,
    )
    return generate_scene(spec)


def make_drawing_from_points(points3d, edges, faces=None, camera=None):
    """Project explicit 3D points into a LineDrawing with ground truth."""
    camera = camera or Camera()
    pts = np.asarray(points3d, dtype=float)
    vertices = tuple(
        Vertex2D(*project(p, camera), index=i) for i, p in enumerate(pts)
    )
    edge_objs = tuple(
        Edge(EdgeKind.SEGMENT, (a, b), j) for j, (a, b) in enumerate(edges)
    )
    gt = tuple(float(z) for z in pts[:, 2])
    faces_t = tuple(tuple(f) for f in faces) if faces else None
    return LineDrawing(vertices, edge_objs, camera, faces_t, gt)


@pytest.fixture(scope="session")
def tetrahedron():
    """Irregular tetrahedron: no parallel, perpendicular, equal-length, or
    quad-face structure at all, so only the anchor equation exists."""
    pts = np.array([
        [0.0, 0.0, 5.6],
        [1.1, 0.2, 6.3],
        [0.3, 1.0, 6.8],
        [-0.8, 0.4, 6.1],
    ])
    edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    d = make_drawing_from_points(pts, edges)
    anchor = ConstraintCandidate(
        ConstraintKind.ANCHOR, (0,), Provenance.GROUND_TRUTH, float(pts[0, 2])
    )
    pool = [anchor]
    return d, np.asarray(d.gt_depths), pool


@pytest.fixture(scope="session")
def hexagonal_prism_scene():
    spec = SceneSpec(
        Family.NPRISM, (6.0, 0.8, 1.0),
        rotation=(0.4, 0.5, 1.1), translation=(0.0, 0.1, 6.0), seed=9,
    )
    return generate_scene(spec)
