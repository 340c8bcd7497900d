"""Core data model: line drawings, cameras, constraint candidates, file I/O.

A line drawing is an edge-vertex graph with 2D vertex positions in
camera image-plane units, observed under a known pinhole perspective
projection.  Everything downstream (detection, equation building,
solving) works against the types in this module.

All types are immutable after construction and safe to share across
threads.  Coordinates stay in image-plane units throughout; pixels only
exist in external rasterizers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class DrawingError(ValueError):
    """Raised when a drawing or one of its elements violates an invariant."""


class EdgeKind(Enum):
    SEGMENT = "segment"
    ARC = "arc"


class ConstraintKind(Enum):
    PARALLEL = "parallel"
    PERPENDICULAR = "perpendicular"
    EQUAL_LENGTH = "equal_length"
    FACE_PLANARITY = "face_planarity"
    ANCHOR = "anchor"


PAIRWISE_KINDS = frozenset(
    {ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR, ConstraintKind.EQUAL_LENGTH}
)


class Provenance(Enum):
    GROUND_TRUTH = "ground_truth"
    HEURISTIC = "heuristic"
    JLINKAGE = "jlinkage"
    TRUE2FORM = "true2form"
    PREDICTED = "predicted"
    SYSTEM = "system"


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: focal length plus the nominal object-center distance."""

    focal_length: float = 5.0
    center_distance: float = 6.0

    def __post_init__(self):
        if not self.focal_length > 0:
            raise DrawingError(f"focal_length must be positive, got {self.focal_length}")
        if not self.center_distance > 0:
            raise DrawingError(f"center_distance must be positive, got {self.center_distance}")


@dataclass(frozen=True)
class Vertex2D:
    x: float
    y: float
    index: int


@dataclass(frozen=True)
class ArcParams:
    """2D arc annotation: projected circle center and a point on the arc."""

    center: tuple[float, float]
    mid: tuple[float, float]


@dataclass(frozen=True)
class Edge:
    kind: EdgeKind
    endpoints: tuple[int, int]
    index: int
    arc: Optional[ArcParams] = None

    def __post_init__(self):
        a, b = self.endpoints
        if a == b:
            raise DrawingError(f"edge {self.index}: endpoints must be distinct, got ({a}, {b})")
        if (self.kind is EdgeKind.ARC) != (self.arc is not None):
            raise DrawingError(f"edge {self.index}: arc params present iff kind is arc")


@dataclass(frozen=True, eq=False)
class ConstraintCandidate:
    """A typed relationship between geometric entities of one drawing.

    Pairwise kinds reference two edge indices (stored ascending), face
    planarity references one face index, and an anchor pins one vertex
    depth to ``anchor_value``.  Equality and hashing ignore provenance
    and the anchor value so candidate lists behave like sets of
    (kind, entities) pairs.
    """

    kind: ConstraintKind
    entities: tuple[int, ...]
    provenance: Provenance = Provenance.SYSTEM
    anchor_value: Optional[float] = None

    def __post_init__(self):
        ents = tuple(int(e) for e in self.entities)
        if self.kind in PAIRWISE_KINDS:
            if len(ents) != 2 or ents[0] == ents[1]:
                raise DrawingError(f"{self.kind.value} candidate needs two distinct edges, got {ents}")
            ents = tuple(sorted(ents))
        elif self.kind is ConstraintKind.FACE_PLANARITY:
            if len(ents) != 1:
                raise DrawingError(f"face candidate needs one face index, got {ents}")
        elif self.kind is ConstraintKind.ANCHOR:
            if len(ents) != 1:
                raise DrawingError(f"anchor candidate needs one vertex index, got {ents}")
            if self.anchor_value is None or not self.anchor_value > 0:
                raise DrawingError(f"anchor needs a positive anchor_value, got {self.anchor_value}")
        if self.kind is not ConstraintKind.ANCHOR and self.anchor_value is not None:
            raise DrawingError(f"anchor_value only valid on anchors, got one on {self.kind.value}")
        object.__setattr__(self, "entities", ents)

    def __eq__(self, other):
        if not isinstance(other, ConstraintCandidate):
            return NotImplemented
        return self.kind is other.kind and self.entities == other.entities

    def __hash__(self):
        return hash((self.kind, self.entities))


def canonicalize(cand: ConstraintCandidate) -> ConstraintCandidate:
    """Return the canonical form of a candidate (ascending entity order).

    Construction already canonicalizes, so this is idempotent by design.
    """
    return ConstraintCandidate(cand.kind, cand.entities, cand.provenance, cand.anchor_value)


def of_kind(cands: Iterable[ConstraintCandidate], kind: ConstraintKind) -> list[ConstraintCandidate]:
    return [c for c in cands if c.kind is kind]


def of_provenance(cands: Iterable[ConstraintCandidate], prov: Provenance) -> list[ConstraintCandidate]:
    return [c for c in cands if c.provenance is prov]


@dataclass(frozen=True)
class LineDrawing:
    """Edge-vertex graph with camera, optional faces and ground truth."""

    vertices: tuple[Vertex2D, ...]
    edges: tuple[Edge, ...]
    camera: Camera
    faces: Optional[tuple[tuple[int, ...], ...]] = None
    gt_depths: Optional[tuple[float, ...]] = None
    constraints: Optional[tuple[ConstraintCandidate, ...]] = None
    predicted_depths: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        validate_drawing(self)

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def gt_constraints(self) -> list[ConstraintCandidate]:
        """Candidates carried with ground-truth provenance (possibly empty)."""
        return of_provenance(self.constraints or (), Provenance.GROUND_TRUTH)

    def points2d(self) -> np.ndarray:
        """(m, 2) array of vertex positions."""
        return np.array([[v.x, v.y] for v in self.vertices], dtype=float)

    def ray_directions(self) -> np.ndarray:
        """(m, 3) array of per-vertex back-projection rays (x/f, y/f, 1).

        The 3D position of vertex i at depth Z_i is Z_i times row i.
        """
        f = self.camera.focal_length
        pts = self.points2d()
        return np.column_stack([pts[:, 0] / f, pts[:, 1] / f, np.ones(len(pts))])

    def with_constraints(self, cands: Sequence[ConstraintCandidate]) -> "LineDrawing":
        return LineDrawing(
            self.vertices, self.edges, self.camera, self.faces,
            self.gt_depths, tuple(cands), self.predicted_depths,
        )

    def with_predicted_depths(self, depths: Sequence[float]) -> "LineDrawing":
        return LineDrawing(
            self.vertices, self.edges, self.camera, self.faces,
            self.gt_depths, self.constraints, tuple(float(z) for z in depths),
        )


def validate_drawing(d: LineDrawing) -> None:
    m = len(d.vertices)
    for i, v in enumerate(d.vertices):
        if v.index != i:
            raise DrawingError(f"vertex {i}: index field is {v.index}, expected {i}")
    seen: set[tuple] = set()
    for j, e in enumerate(d.edges):
        if e.index != j:
            raise DrawingError(f"edge {j}: index field is {e.index}, expected {j}")
        for p in e.endpoints:
            if not 0 <= p < m:
                raise DrawingError(f"edge {j}: endpoint {p} out of range (have {m} vertices)")
        key = (frozenset(e.endpoints), e.kind, e.arc)
        if key in seen:
            raise DrawingError(f"edge {j}: duplicate of an earlier edge")
        seen.add(key)
        if e.kind is EdgeKind.ARC:
            a, b = e.endpoints
            pa = np.array([d.vertices[a].x, d.vertices[a].y])
            pb = np.array([d.vertices[b].x, d.vertices[b].y])
            pm = np.array(e.arc.mid)
            u, v = pb - pa, pm - pa
            area2 = abs(float(u[0] * v[1] - u[1] * v[0]))
            if area2 <= 1e-12:
                raise DrawingError(f"edge {j}: arc midpoint collinear with endpoints")
    if d.faces is not None:
        for k, face in enumerate(d.faces):
            if len(face) < 3:
                raise DrawingError(f"face {k}: needs at least 3 vertices")
            for p in face:
                if not 0 <= p < m:
                    raise DrawingError(f"face {k}: vertex {p} out of range")
            if len(set(face)) != len(face):
                raise DrawingError(f"face {k}: repeated vertex")
    for name, depths in (("gt_depths", d.gt_depths), ("predicted_depths", d.predicted_depths)):
        if depths is not None:
            if len(depths) != m:
                raise DrawingError(f"{name}: length {len(depths)} != vertex count {m}")
            for i, z in enumerate(depths):
                if not z > 0:
                    raise DrawingError(f"{name}[{i}]: depth must be positive, got {z}")
    if d.constraints is not None:
        nf = len(d.faces) if d.faces is not None else 0
        for ci, c in enumerate(d.constraints):
            if c.kind in PAIRWISE_KINDS:
                for e in c.entities:
                    if not 0 <= e < len(d.edges):
                        raise DrawingError(f"constraint {ci}: edge {e} out of range")
            elif c.kind is ConstraintKind.FACE_PLANARITY:
                fi = c.entities[0]
                if not 0 <= fi < nf:
                    raise DrawingError(f"constraint {ci}: face {fi} out of range")
                if len(d.faces[fi]) < 4:
                    raise DrawingError(f"constraint {ci}: planarity face {fi} has fewer than 4 vertices")
            elif c.kind is ConstraintKind.ANCHOR:
                if not 0 <= c.entities[0] < m:
                    raise DrawingError(f"constraint {ci}: vertex {c.entities[0]} out of range")


# ---------------------------------------------------------------------------
# Projection


def project(point3d: Sequence[float], camera: Camera) -> tuple[float, float]:
    """Perspective-project a 3D point: (f X / Z, f Y / Z).  Requires Z > 0."""
    x, y, z = float(point3d[0]), float(point3d[1]), float(point3d[2])
    if not z > 0:
        raise DrawingError(f"cannot project point with non-positive depth {z}")
    f = camera.focal_length
    return (f * x / z, f * y / z)


def unproject(v: Vertex2D, depth: float, camera: Camera) -> tuple[float, float, float]:
    """Back-project an image-plane vertex to 3D at the given depth."""
    if not depth > 0:
        raise DrawingError(f"cannot unproject to non-positive depth {depth}")
    f = camera.focal_length
    return (v.x * depth / f, v.y * depth / f, float(depth))


def unproject_all(d: LineDrawing, depths: Sequence[float]) -> np.ndarray:
    """(m, 3) array of 3D vertex positions for the given depth vector."""
    z = np.asarray(depths, dtype=float)
    if z.shape != (d.num_vertices,):
        raise DrawingError(f"depth vector length {z.shape} != vertex count {d.num_vertices}")
    return d.ray_directions() * z[:, None]


def arc_chord(e: Edge) -> Edge:
    """Replace a circular arc with the segment joining its endpoints."""
    if e.kind is not EdgeKind.ARC:
        raise DrawingError(f"edge {e.index} is already a segment")
    return Edge(EdgeKind.SEGMENT, e.endpoints, e.index)


def chord_edges(d: LineDrawing) -> list[Edge]:
    """All edges with arcs replaced by their chords (indices preserved)."""
    return [arc_chord(e) if e.kind is EdgeKind.ARC else e for e in d.edges]


# ---------------------------------------------------------------------------
# Interchange format

_EXTRA_KEYS = {"solution"}


def drawing_to_dict(d: LineDrawing) -> dict:
    doc: dict = {
        "camera": {
            "focal_length": d.camera.focal_length,
            "center_distance": d.camera.center_distance,
        },
        "vertices": [[v.x, v.y] for v in d.vertices],
        "edges": [_edge_to_dict(e) for e in d.edges],
    }
    if d.faces is not None:
        doc["faces"] = [list(f) for f in d.faces]
    if d.gt_depths is not None:
        doc["gt_depths"] = list(d.gt_depths)
    if d.constraints is not None:
        doc["constraints"] = [_candidate_to_dict(c) for c in d.constraints]
    if d.predicted_depths is not None:
        doc["predicted_depths"] = list(d.predicted_depths)
    return doc


def _edge_to_dict(e: Edge) -> dict:
    out: dict = {"kind": e.kind.value, "endpoints": list(e.endpoints)}
    if e.arc is not None:
        out["arc"] = {"center": list(e.arc.center), "mid": list(e.arc.mid)}
    return out


def _candidate_to_dict(c: ConstraintCandidate) -> dict:
    out: dict = {
        "kind": c.kind.value,
        "entities": list(c.entities),
        "provenance": c.provenance.value,
    }
    if c.anchor_value is not None:
        out["anchor_value"] = c.anchor_value
    return out


def drawing_from_dict(doc: dict) -> LineDrawing:
    try:
        cam = doc["camera"]
        camera = Camera(float(cam["focal_length"]), float(cam["center_distance"]))
        vertices = tuple(
            Vertex2D(float(p[0]), float(p[1]), i) for i, p in enumerate(doc["vertices"])
        )
        edges = []
        for j, ed in enumerate(doc["edges"]):
            kind = EdgeKind(ed["kind"])
            arc = None
            if "arc" in ed:
                arc = ArcParams(
                    tuple(float(t) for t in ed["arc"]["center"]),
                    tuple(float(t) for t in ed["arc"]["mid"]),
                )
            edges.append(Edge(kind, (int(ed["endpoints"][0]), int(ed["endpoints"][1])), j, arc))
        faces = None
        if "faces" in doc:
            faces = tuple(tuple(int(i) for i in f) for f in doc["faces"])
        gt_depths = tuple(float(z) for z in doc["gt_depths"]) if "gt_depths" in doc else None
        constraints = None
        if "constraints" in doc:
            constraints = tuple(_candidate_from_dict(cd) for cd in doc["constraints"])
        predicted = (
            tuple(float(z) for z in doc["predicted_depths"])
            if "predicted_depths" in doc
            else None
        )
    except (KeyError, TypeError, IndexError) as exc:
        raise DrawingError(f"malformed drawing document: {exc}") from exc
    known = {"camera", "vertices", "edges", "faces", "gt_depths", "constraints",
             "predicted_depths"} | _EXTRA_KEYS
    unknown = set(doc) - known
    if unknown:
        raise DrawingError(f"unknown document keys: {sorted(unknown)}")
    return LineDrawing(tuple(vertices), tuple(edges), camera, faces, gt_depths, constraints, predicted)


def _candidate_from_dict(cd: dict) -> ConstraintCandidate:
    return ConstraintCandidate(
        ConstraintKind(cd["kind"]),
        tuple(int(e) for e in cd["entities"]),
        Provenance(cd["provenance"]),
        float(cd["anchor_value"]) if "anchor_value" in cd else None,
    )


def dumps_drawing(d: LineDrawing, extra: Optional[dict] = None) -> str:
    """Serialize to the canonical interchange JSON text.

    Key order is fixed and floats use shortest round-trip repr, so equal
    drawings serialize to byte-identical documents.
    """
    doc = drawing_to_dict(d)
    if extra:
        unknown = set(extra) - _EXTRA_KEYS
        if unknown:
            raise DrawingError(f"unknown extra document keys: {sorted(unknown)}")
        doc.update(extra)
    return json.dumps(doc, indent=1) + "\n"


def loads_drawing(text: Union[str, bytes]) -> LineDrawing:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DrawingError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DrawingError("drawing document must be a JSON object")
    return drawing_from_dict(doc)


def load_drawing(path: Union[str, Path]) -> LineDrawing:
    return loads_drawing(Path(path).read_text())


def save_drawing(d: LineDrawing, path: Union[str, Path], extra: Optional[dict] = None) -> None:
    Path(path).write_text(dumps_drawing(d, extra))


def load_document(path: Union[str, Path]) -> dict:
    """Load the raw interchange document (drawing plus any extra sections)."""
    doc = json.loads(Path(path).read_text())
    drawing_from_dict(doc)  # validation side effect
    return doc
