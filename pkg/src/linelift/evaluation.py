"""Success criterion, failure taxonomy, and the ablation harness.

A reconstruction counts as a success only when every vertex depth lands
within the tolerance of its true value.  Anything else falls into exactly
one of five failure categories:

  unsolvable  no attempt could assemble a full equation set
  fail        equations were assembled but no solve converged
  wrong_i     no attempt ever selected a fully correct constraint set
  wrong_ii    a correct set was selected at least once, yet the true
              shape was never reached
  wrong_iii   the true shape was reached in some attempt but a different
              solution was chosen as the final answer

The ablation harness sweeps constraint sources, initialization
strategies, and restart budgets over a corpus, writing a JSON report, a
CSV table, histogram bins, and rendered figures.  Report artifacts carry
no wall-clock data, so identical seeds reproduce identical bytes.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .drawing import (
    ConstraintCandidate,
    ConstraintKind,
    DrawingError,
    LineDrawing,
    load_drawing,
)
from . import detectors
from .solving import (
    InitStrategy,
    SolveConfig,
    SolveOutcome,
    SolveStatus,
    reconstruct,
)

log = logging.getLogger(__name__)

SUCCESS_TAU = 1e-3


class TaxonomyLabel(enum.Enum):
    SUCCESS = "success"
    UNSOLVABLE = "unsolvable"
    FAIL = "fail"
    WRONG_I = "wrong_i"
    WRONG_II = "wrong_ii"
    WRONG_III = "wrong_iii"


def is_success(z: Sequence[float], gt: Sequence[float], tau: float = SUCCESS_TAU) -> bool:
    """True iff every vertex depth is strictly within tau of ground truth."""
    z = np.asarray(z, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if z.shape != gt.shape:
        raise DrawingError(f"length mismatch: {z.shape} vs {gt.shape}")
    return bool(np.max(np.abs(z - gt)) < tau)


def _selection_correct(selection, gt_set: set[ConstraintCandidate]) -> bool:
    non_anchor = [c for c in selection.candidates if c.kind is not ConstraintKind.ANCHOR]
    return all(c in gt_set for c in non_anchor)


def classify(
    outcome: SolveOutcome,
    d: LineDrawing,
    pool: Sequence[ConstraintCandidate],
    tau: float = SUCCESS_TAU,
) -> TaxonomyLabel:
    """Assign the single taxonomy label for one drawing's outcome."""
    if d.gt_depths is None:
        raise DrawingError("classification requires gt_depths")
    gt = np.asarray(d.gt_depths, dtype=float)
    if outcome.status is SolveStatus.UNSOLVABLE:
        return TaxonomyLabel.UNSOLVABLE
    if outcome.status is SolveStatus.SOLVER_FAIL:
        return TaxonomyLabel.FAIL
    if outcome.z is not None and is_success(outcome.z, gt, tau):
        return TaxonomyLabel.SUCCESS
    for attempt in outcome.attempts:
        if attempt.root is not None and is_success(attempt.root, gt, tau):
            return TaxonomyLabel.WRONG_III
    gt_set = set(d.gt_constraints)
    for attempt in outcome.attempts:
        if attempt.selection is not None and _selection_correct(attempt.selection, gt_set):
            return TaxonomyLabel.WRONG_II
    return TaxonomyLabel.WRONG_I


# ---------------------------------------------------------------------------
# Ablation harness


@dataclass(frozen=True)
class GridCell:
    source: str  # gt | heuristic | jlinkage | true2form
    init: InitStrategy
    sigma: float
    n_restarts: int

    @property
    def name(self) -> str:
        init = self.init.value
        if self.init is InitStrategy.GT_NOISE:
            init = f"{init}{self.sigma:g}"
        return f"{self.source}-{init}-n{self.n_restarts}"


@dataclass
class DrawingResult:
    file: str
    label: TaxonomyLabel
    max_abs_err: Optional[float]
    satisfied: int
    init_abs_err: float
    elapsed_s: float


@dataclass
class CellResult:
    cell: GridCell
    drawings: list[DrawingResult] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out = {label.value: 0 for label in TaxonomyLabel}
        for r in self.drawings:
            out[r.label.value] += 1
        return out

    @property
    def success_rate(self) -> float:
        if not self.drawings:
            return 0.0
        return sum(r.label is TaxonomyLabel.SUCCESS for r in self.drawings) / len(self.drawings)

    @property
    def mean_init_abs_err(self) -> float:
        if not self.drawings:
            return 0.0
        return float(np.mean([r.init_abs_err for r in self.drawings]))


_SOURCE_PROVENANCE = {
    "gt": "ground_truth",
    "heuristic": "heuristic",
    "jlinkage": "jlinkage",
    "true2form": "true2form",
    "predicted": "predicted",
}


def detect_pool(
    d: LineDrawing,
    source: str,
    detector_config: Optional[detectors.DetectorConfig] = None,
) -> list[ConstraintCandidate]:
    """Candidate pool for one source name.

    Candidates already stored in the document under the matching
    provenance win (file-composed pipelines); otherwise the detector runs
    here.  Ground-truth and predicted pools are only ever read, never
    computed.
    """
    if source not in _SOURCE_PROVENANCE:
        raise ValueError(f"unknown constraint source {source!r}")
    stored = [
        c for c in (d.constraints or ())
        if c.provenance.value == _SOURCE_PROVENANCE[source]
    ]
    if stored:
        return stored
    if source == "gt":
        raise DrawingError("drawing carries no ground-truth constraints")
    if source == "predicted":
        raise DrawingError("drawing carries no predicted constraints")
    cfg = detector_config or detectors.DetectorConfig()
    if source == "heuristic":
        return detectors.detect_heuristic(d, cfg)
    if source == "jlinkage":
        return detectors.detect_jlinkage(d, cfg)
    if d.predicted_depths is not None:
        z0 = np.asarray(d.predicted_depths, dtype=float)
    elif d.gt_depths is not None:
        z0 = np.asarray(d.gt_depths, dtype=float)
    else:
        raise DrawingError("refinement detector needs predicted or true depths as baseline")
    return detectors.detect_true2form(d, z0, cfg)


def evaluate_drawing(
    d: LineDrawing,
    file: str,
    cell: GridCell,
    seed: int,
    detector_config: Optional[detectors.DetectorConfig] = None,
    tau: float = SUCCESS_TAU,
) -> DrawingResult:
    pool = detect_pool(d, cell.source, detector_config)
    config = SolveConfig(
        n_restarts=cell.n_restarts,
        init_strategy=cell.init,
        init_sigma=cell.sigma,
        seed=seed,
    )
    outcome = reconstruct(d, pool, config)
    label = classify(outcome, d, pool, tau)
    gt = np.asarray(d.gt_depths, dtype=float)
    err = None
    if outcome.z is not None:
        err = float(np.max(np.abs(outcome.z - gt)))
    init0 = next((a.z0 for a in outcome.attempts if a.z0 is not None), None)
    init_err = float(np.mean(np.abs(init0 - gt))) if init0 is not None else 0.0
    return DrawingResult(file, label, err, outcome.satisfied_count, init_err, outcome.elapsed_s)


def run_ablation(
    corpus: Sequence[tuple[str, LineDrawing]],
    cells: Sequence[GridCell],
    seed: int = 0,
    detector_config: Optional[detectors.DetectorConfig] = None,
    tau: float = SUCCESS_TAU,
    jobs: int = 1,
    progress: Optional[Callable[[str], None]] = None,
) -> list[CellResult]:
    """Evaluate every grid cell over the corpus.

    Pools are detected per (drawing, source) on the fly inside each task;
    results are assembled in deterministic corpus order regardless of
    parallelism.
    """
    results = []
    for cell in cells:
        cell_result = CellResult(cell)
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(evaluate_drawing, d, name, cell, seed, detector_config, tau)
                    for name, d in corpus
                ]
                cell_result.drawings = [f.result() for f in futures]
        else:
            for name, d in corpus:
                cell_result.drawings.append(
                    evaluate_drawing(d, name, cell, seed, detector_config, tau)
                )
        results.append(cell_result)
        if progress:
            counts = cell_result.counts()
            progress(f"{cell.name}: success {counts['success']}/{len(cell_result.drawings)}")
    return results


def load_corpus(corpus_dir: Union[str, Path], connected_only: bool = False) -> list[tuple[str, LineDrawing]]:
    corpus_dir = Path(corpus_dir)
    manifest_path = corpus_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        entries = manifest["entries"]
        if connected_only:
            entries = [e for e in entries if e.get("connected", True)]
        return [(e["file"], load_drawing(corpus_dir / e["file"])) for e in entries]
    files = sorted(p.name for p in corpus_dir.glob("*.json"))
    return [(name, load_drawing(corpus_dir / name)) for name in files]


# ---------------------------------------------------------------------------
# Report emission


HIST_BIN_EDGES = [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, float("inf")]


def _error_histogram(results: Sequence[DrawingResult]) -> list[int]:
    errs = [r.max_abs_err for r in results if r.max_abs_err is not None]
    counts = [0] * (len(HIST_BIN_EDGES) - 1)
    for e in errs:
        for b in range(len(counts)):
            if HIST_BIN_EDGES[b] <= e < HIST_BIN_EDGES[b + 1]:
                counts[b] += 1
                break
    return counts


def report_dict(cells: Sequence[CellResult], corpus_size: int, tau: float = SUCCESS_TAU) -> dict:
    return {
        "corpus_size": corpus_size,
        "tau": tau,
        "histogram_bin_edges": [e if e != float("inf") else "inf" for e in HIST_BIN_EDGES],
        "cells": [
            {
                "name": c.cell.name,
                "source": c.cell.source,
                "init": c.cell.init.value,
                "sigma": c.cell.sigma,
                "n_restarts": c.cell.n_restarts,
                "counts": c.counts(),
                "success_rate": c.success_rate,
                "mean_init_abs_err": c.mean_init_abs_err,
                "error_histogram": _error_histogram(c.drawings),
                "drawings": [
                    {
                        "file": r.file,
                        "label": r.label.value,
                        "max_abs_err": r.max_abs_err,
                        "satisfied": r.satisfied,
                    }
                    for r in c.drawings
                ],
            }
            for c in cells
        ],
    }


def write_report(
    cells: Sequence[CellResult],
    corpus_size: int,
    out_dir: Union[str, Path],
    tau: float = SUCCESS_TAU,
    figures: bool = True,
) -> dict:
    """Write report.json, report.csv, histogram.csv, and figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = report_dict(cells, corpus_size, tau)
    (out / "report.json").write_text(json.dumps(doc, indent=1) + "\n")

    with (out / "report.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([
            "cell", "source", "init", "sigma", "n_restarts",
            "success", "unsolvable", "fail", "wrong_i", "wrong_ii", "wrong_iii",
            "success_rate", "mean_init_abs_err",
        ])
        for c in cells:
            counts = c.counts()
            writer.writerow([
                c.cell.name, c.cell.source, c.cell.init.value, c.cell.sigma,
                c.cell.n_restarts,
                counts["success"], counts["unsolvable"], counts["fail"],
                counts["wrong_i"], counts["wrong_ii"], counts["wrong_iii"],
                f"{c.success_rate:.6f}", f"{c.mean_init_abs_err:.6f}",
            ])

    with (out / "histogram.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell"] + [
            f"[{HIST_BIN_EDGES[b]:g},{HIST_BIN_EDGES[b+1]:g})" for b in range(len(HIST_BIN_EDGES) - 1)
        ])
        for c in cells:
            writer.writerow([c.cell.name] + _error_histogram(c.drawings))

    if figures:
        render_figures(cells, out)
    return doc


def render_figures(cells: Sequence[CellResult], out_dir: Union[str, Path]) -> list[Path]:
    """Success-rate bars and max-error histograms as PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(cells)), 4))
    names = [c.cell.name for c in cells]
    rates = [c.success_rate for c in cells]
    ax.bar(range(len(cells)), rates, color="#4878d0")
    ax.set_xticks(range(len(cells)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("success rate")
    ax.set_title("Reconstruction success by pipeline configuration")
    fig.tight_layout()
    path = out / "success_rates.png"
    fig.savefig(path, metadata={"Software": "linelift"})
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(cells))
    centers = np.arange(len(HIST_BIN_EDGES) - 1)
    for k, c in enumerate(cells):
        ax.bar(centers + k * width, _error_histogram(c.drawings), width=width, label=c.cell.name)
    ax.set_xticks(centers + 0.4)
    ax.set_xticklabels(
        [f"<{HIST_BIN_EDGES[b+1]:g}" for b in range(len(HIST_BIN_EDGES) - 1)], fontsize=8
    )
    ax.set_xlabel("max vertex depth error")
    ax.set_ylabel("drawings")
    ax.set_title("Depth-error distribution")
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = out / "error_histogram.png"
    fig.savefig(path, metadata={"Software": "linelift"})
    plt.close(fig)
    written.append(path)
    return written
