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
    of_kind,
)
from linelift.detectors import (
    DetectorConfig,
    DetectionScore,
    detect_heuristic,
    detect_jlinkage,
    detect_true2form,
    score_detection,
    symmetry_filter,
)


def segments_drawing(segments, f=5.0):
    """Build a drawing from a list of 2D segment endpoint pairs."""
    vertices = []
    edges = []
    for j, (a, b) in enumerate(segments):
        ia = len(vertices)
        vertices.append(Vertex2D(float(a[0]), float(a[1]), ia))
        vertices.append(Vertex2D(float(b[0]), float(b[1]), ia + 1))
        edges.append(Edge(EdgeKind.SEGMENT, (ia, ia + 1), j))
    return LineDrawing(tuple(vertices), tuple(edges), Camera(f, 6.0))


def rotated(deg, length=1.0, origin=(0.0, 0.0)):
    t = math.radians(deg)
    return (origin, (origin[0] + length * math.cos(t), origin[1] + length * math.sin(t)))


class TestHeuristic:
    def pair_at_angle(self, deg):
        d = segments_drawing([rotated(0.0), rotated(deg, origin=(0.0, 1.0))])
        return detect_heuristic(d)

    def test_ten_degrees_parallel(self):
        out = self.pair_at_angle(10.0)
        assert [c.kind for c in out] == [ConstraintKind.PARALLEL]

    def test_twenty_five_degrees_perpendicular(self):
        out = self.pair_at_angle(25.0)
        assert [c.kind for c in out] == [ConstraintKind.PERPENDICULAR]

    def test_seventeen_degrees_neither(self):
        assert self.pair_at_angle(17.0) == []

    def test_rotation_invariance(self):
        base = segments_drawing([rotated(5.0), rotated(47.0, origin=(0.5, 1.0)),
                                 rotated(88.0, origin=(-1.0, 0.2))])
        spun = segments_drawing([
            rotated(5.0 + 33.0), rotated(47.0 + 33.0, origin=(0.5, 1.0)),
            rotated(88.0 + 33.0, origin=(-1.0, 0.2)),
        ])
        a = {(c.kind, c.entities) for c in detect_heuristic(base)}
        b = {(c.kind, c.entities) for c in detect_heuristic(spun)}
        assert a == b

    def test_threshold_invariant_enforced(self):
        with pytest.raises(ValueError):
            DetectorConfig(parallel_angle_max_deg=25.0, perpendicular_angle_min_deg=20.0)

    def test_provenance_tagged(self):
        for c in self.pair_at_angle(10.0):
            assert c.provenance is Provenance.HEURISTIC


class TestJLinkage:
    def test_cuboid_parallel_classes_exact(self, cuboid_scene):
        d, _, cands = cuboid_scene
        got = of_kind(detect_jlinkage(d), ConstraintKind.PARALLEL)
        want = of_kind(list(cands), ConstraintKind.PARALLEL)
        s = score_detection(got, want)
        assert s.f1 == 1.0

    def test_cuboid_perpendicular_exact(self, cuboid_scene):
        d, _, cands = cuboid_scene
        got = of_kind(detect_jlinkage(d), ConstraintKind.PERPENDICULAR)
        want = of_kind(list(cands), ConstraintKind.PERPENDICULAR)
        s = score_detection(got, want)
        assert s.f1 == 1.0

    def test_all_parallel_emits_no_perpendicular(self):
        d = segments_drawing([
            ((0.0, 0.0), (1.0, 0.0)),
            ((0.0, 0.5), (1.0, 0.5)),
            ((0.0, 1.0), (1.0, 1.0)),
        ])
        out = detect_jlinkage(d)
        assert of_kind(out, ConstraintKind.PERPENDICULAR) == []
        assert len(of_kind(out, ConstraintKind.PARALLEL)) == 3

    def test_single_edge_empty(self):
        d = segments_drawing([((0.0, 0.0), (1.0, 0.0))])
        assert detect_jlinkage(d) == []

    def test_determinism(self, cuboid_scene):
        d, _, _ = cuboid_scene
        a = detect_jlinkage(d)
        b = detect_jlinkage(d)
        assert a == b

    def test_permutation_invariance(self, hexagonal_prism_scene):
        d, _, _ = hexagonal_prism_scene
        rng = np.random.default_rng(3)
        perm = list(rng.permutation(d.num_edges))
        inv = {orig: new for new, orig in enumerate(perm)}
        edges = tuple(
            Edge(d.edges[orig].kind, d.edges[orig].endpoints, new, d.edges[orig].arc)
            for new, orig in enumerate(perm)
        )
        shuffled = LineDrawing(d.vertices, edges, d.camera, d.faces, d.gt_depths)
        base = {(c.kind, tuple(sorted(inv[e] for e in c.entities)))
                for c in detect_jlinkage(d)}
        got = {(c.kind, c.entities) for c in detect_jlinkage(shuffled)}
        assert base == got


class TestTrue2Form:
    def test_ground_truth_baseline_recovers_labels(self, cuboid_scene):
        d, gt, cands = cuboid_scene
        out = detect_true2form(d, np.asarray(gt))
        for kind in (ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR):
            s = score_detection(of_kind(out, kind), of_kind(list(cands), kind))
            assert s.f1 == 1.0

    def test_flat_baseline_terminates(self, cuboid_scene):
        d, _, _ = cuboid_scene
        out = detect_true2form(d, np.full(d.num_vertices, 6.0))
        assert isinstance(out, list)

    def test_zero_weight_judges_baseline_geometry(self, cuboid_scene):
        from linelift.detectors import True2FormConfig

        d, gt, _ = cuboid_scene
        cfg = DetectorConfig()
        cfg.true2form = True2FormConfig(constraint_weight=0.0)
        out_gt = detect_true2form(d, np.asarray(gt), cfg)
        out_gt2 = detect_true2form(d, np.asarray(gt), cfg)
        assert out_gt == out_gt2
        s = score_detection(of_kind(out_gt, ConstraintKind.PARALLEL),
                            of_kind(list(d.constraints), ConstraintKind.PARALLEL))
        assert s.recall == 1.0

    def test_rejects_bad_baseline(self, cuboid_scene):
        d, _, _ = cuboid_scene
        with pytest.raises(ValueError):
            detect_true2form(d, np.full(d.num_vertices, -1.0))


class TestSymmetryFilter:
    def test_mutual_pair_kept(self):
        out = symmetry_filter({1: [2], 2: [1]}, ConstraintKind.PARALLEL)
        assert out == [ConstraintCandidate(ConstraintKind.PARALLEL, (1, 2))]

    def test_one_sided_dropped(self):
        assert symmetry_filter({1: [2], 2: []}, ConstraintKind.PARALLEL) == []

    def test_self_pair_dropped(self):
        assert symmetry_filter({1: [1]}, ConstraintKind.PARALLEL) == []

    def test_missing_query_is_empty(self):
        assert symmetry_filter({1: [5]}, ConstraintKind.PARALLEL) == []

    def test_output_symmetric_and_subset(self):
        rng = np.random.default_rng(5)
        for _ in range(40):
            pred = {
                i: list(rng.choice(8, size=rng.integers(0, 4), replace=False))
                for i in range(8)
            }
            out = symmetry_filter(pred, ConstraintKind.PERPENDICULAR)
            seen = {c.entities for c in out}
            for i, j in seen:
                assert j in pred.get(i, ()) and i in pred.get(j, ())
            assert len(seen) == len(out)


class TestScoring:
    def c(self, *pairs):
        return [ConstraintCandidate(ConstraintKind.PARALLEL, p) for p in pairs]

    def test_exact_match(self):
        s = score_detection(self.c((0, 1), (2, 3)), self.c((0, 1), (2, 3)))
        assert s == DetectionScore(1.0, 1.0, 1.0)

    def test_empty_prediction_nonempty_gt(self):
        s = score_detection([], self.c((0, 1)))
        assert s == DetectionScore(0.0, 0.0, 0.0)

    def test_partial(self):
        pred = self.c((0, 1), (2, 3), (4, 5))
        gt = self.c((0, 1), (2, 3), (6, 7), (8, 9))
        s = score_detection(pred, gt)
        assert s.precision == pytest.approx(2 / 3)
        assert s.recall == pytest.approx(1 / 2)
        assert s.f1 == pytest.approx(4 / 7)

    def test_both_empty(self):
        s = score_detection([], [])
        assert s.precision == 1.0


class TestCorpusMetrics:
    """Detector quality on deterministic mini-corpora."""

    def manhattan_corpus(self, n=12):
        from linelift.scenes import Family, generate_scene, random_spec

        fams = [Family.CUBOID, Family.LBLOCK, Family.HOLE_PLATE]
        out = []
        for k in range(n):
            spec = random_spec(fams[k % 3], seed=3000 + k, view="isometric")
            out.append(generate_scene(spec))
        return out

    def test_heuristic_parallel_recall_on_manhattan(self):
        tp = fn = 0
        for d, _, cands in self.manhattan_corpus():
            got = set(of_kind(detect_heuristic(d), ConstraintKind.PARALLEL))
            want = set(of_kind(list(cands), ConstraintKind.PARALLEL))
            tp += len(got & want)
            fn += len(want - got)
        assert tp / (tp + fn) >= 0.99

    def test_jlinkage_parallel_recall_on_manhattan(self):
        tp = fn = 0
        for d, _, cands in self.manhattan_corpus():
            got = set(of_kind(detect_jlinkage(d), ConstraintKind.PARALLEL))
            want = set(of_kind(list(cands), ConstraintKind.PARALLEL))
            tp += len(got & want)
            fn += len(want - got)
        assert tp / (tp + fn) >= 0.99
