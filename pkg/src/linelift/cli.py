"""Command-line pipeline: generate, detect, select, solve, evaluate.

Every stage reads and writes interchange JSON documents, so stages
compose through files and external tools (including the neural
companion) can slot in between detection and solving.

Exit codes: 0 on success, 1 on runtime failure, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import numpy as np

from . import detectors, evaluation, scenes
from .drawing import (
    ConstraintKind,
    DrawingError,
    LineDrawing,
    Provenance,
    dumps_drawing,
    load_document,
    load_drawing,
    loads_drawing,
    of_provenance,
)
from .selection import select_constraints
from .solving import (
    InitStrategy,
    SolveConfig,
    SolveStatus,
    ensure_anchor,
    reconstruct,
)

log = logging.getLogger(__name__)


class ConfigError(Exception):
    """Configuration problem; maps to exit code 2."""


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _check_keys(doc: dict, allowed: set[str], where: str) -> None:
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def parse_init(text: str) -> tuple[InitStrategy, float]:
    """identity | random | predicted | gtnoise:<sigma>"""
    if text.startswith("gtnoise"):
        _, _, sigma = text.partition(":")
        try:
            return InitStrategy.GT_NOISE, float(sigma) if sigma else 0.0
        except ValueError:
            raise ConfigError(f"bad gtnoise sigma in {text!r}")
    try:
        return InitStrategy(text), 0.0
    except ValueError:
        raise ConfigError(f"unknown init strategy {text!r}")


def parse_families(text: Optional[str]) -> Optional[dict]:
    if not text:
        return None
    weights = {}
    for part in text.split(","):
        name, _, w = part.partition("=")
        try:
            fam = scenes.Family(name.strip())
        except ValueError:
            raise ConfigError(f"unknown family {name.strip()!r}")
        weights[fam] = float(w) if w else 1.0
    return weights


def detector_config_from_dict(doc: dict) -> detectors.DetectorConfig:
    _check_keys(doc, {"parallel_angle_max_deg", "perpendicular_angle_min_deg",
                      "jlinkage", "true2form"}, "detector config")
    jl = doc.get("jlinkage", {})
    _check_keys(jl, {"num_hypotheses", "consistency_threshold_deg", "seed"}, "jlinkage config")
    t2f = doc.get("true2form", {})
    _check_keys(t2f, {"constraint_weight", "sigma_alpha_deg", "max_iters"}, "true2form config")
    return detectors.DetectorConfig(
        parallel_angle_max_deg=doc.get("parallel_angle_max_deg", 15.0),
        perpendicular_angle_min_deg=doc.get("perpendicular_angle_min_deg", 20.0),
        jlinkage=detectors.JLinkageConfig(**jl),
        true2form=detectors.True2FormConfig(**t2f),
    )


def _iter_documents(path: Path) -> list[Path]:
    if path.is_dir():
        return sorted(p for p in path.glob("*.json") if p.name != "manifest.json")
    return [path]


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Reconstruct 3D wireframes from single 2D line drawings."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--n", default=20, show_default=True, help="Number of drawings.")
@click.option("--seed", default=0, show_default=True)
@click.option("--families", default=None, help="Comma list, e.g. cuboid=0.4,lblock=0.6.")
@click.option("--view", default="mixed", type=click.Choice(scenes.VIEW_PRESETS), show_default=True)
@click.option("--allow-disconnected", is_flag=True, help="Include multi-part scenes.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def generate(n, seed, families, view, allow_disconnected, out):
    """Generate a synthetic corpus with ground-truth labels."""
    try:
        weights = parse_families(families)
    except ConfigError as exc:
        _fail(str(exc), 2)
    try:
        manifest = scenes.generate_corpus(
            n, seed, out, weights=weights, allow_disconnected=allow_disconnected, view=view
        )
    except Exception as exc:
        _fail(str(exc))
    click.echo(f"wrote {manifest['count']} drawings to {out}")


@main.command()
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("--method", required=True,
              type=click.Choice(["heuristic", "jlinkage", "true2form", "file"]))
@click.option("--config", "config_path", type=click.Path(exists=True, path_type=Path),
              help="Detector configuration JSON.")
@click.option("--pred", "pred_path", type=click.Path(exists=True, path_type=Path),
              help="Interchange document with predicted constraints/depths (method=file).")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def detect(input_path, method, config_path, pred_path, out):
    """Detect constraint candidates and append them to the documents."""
    try:
        cfg = detectors.DetectorConfig()
        if config_path is not None:
            cfg = detector_config_from_dict(json.loads(config_path.read_text()))
    except (ConfigError, ValueError) as exc:
        _fail(str(exc), 2)
    inputs = _iter_documents(input_path)
    if method == "file" and pred_path is None:
        _fail("--pred is required with --method file", 2)
    out = Path(out)
    many = input_path.is_dir()
    if many:
        out.mkdir(parents=True, exist_ok=True)
    try:
        for src in inputs:
            d = load_drawing(src)
            if method == "file":
                pred = load_drawing(pred_path if len(inputs) == 1 else pred_path / src.name)
                extra = list(pred.constraints or ())
                new = [c for c in extra if c.provenance is Provenance.PREDICTED]
                merged = _merge_candidates(d, new, Provenance.PREDICTED)
                if pred.predicted_depths is not None:
                    merged = merged.with_predicted_depths(pred.predicted_depths)
            elif method == "heuristic":
                merged = _merge_candidates(d, detectors.detect_heuristic(d, cfg), Provenance.HEURISTIC)
            elif method == "jlinkage":
                merged = _merge_candidates(d, detectors.detect_jlinkage(d, cfg), Provenance.JLINKAGE)
            else:
                z0 = d.predicted_depths or d.gt_depths
                if z0 is None:
                    raise DrawingError(f"{src.name}: true2form needs predicted or true depths")
                merged = _merge_candidates(
                    d, detectors.detect_true2form(d, np.asarray(z0), cfg), Provenance.TRUE2FORM)
            dest = out / src.name if many else out
            dest.write_text(dumps_drawing(merged))
        click.echo(f"detected ({method}) for {len(inputs)} document(s)")
    except DrawingError as exc:
        _fail(str(exc))


def _merge_candidates(d: LineDrawing, new, provenance: Provenance) -> LineDrawing:
    kept = [c for c in (d.constraints or ()) if c.provenance is not provenance]
    return d.with_constraints(kept + list(new))


@main.command()
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("--source", default="gt", show_default=True,
              type=click.Choice(sorted(evaluation._SOURCE_PROVENANCE)))
@click.option("--init", "init_text", default="gtnoise:0.05", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def select(input_path, source, init_text, seed, out):
    """Run constraint selection once and write the chosen subset."""
    try:
        strategy, sigma = parse_init(init_text)
    except ConfigError as exc:
        _fail(str(exc), 2)
    try:
        d = load_drawing(input_path)
        pool = ensure_anchor(evaluation.detect_pool(d, source), d)
        from .solving import make_initial

        z0 = make_initial(d, strategy, seed, sigma)
        selection = select_constraints(pool, d, z0, seed)
        if selection is None:
            click.echo("selection: unsolvable (insufficient independent constraints)")
            Path(out).write_text(dumps_drawing(d.with_constraints([])))
            return
        chosen = d.with_constraints(selection.candidates)
        Path(out).write_text(dumps_drawing(chosen))
        click.echo(f"selected {len(selection.system)} equations "
                   f"from {len(selection.candidates)} candidates")
    except DrawingError as exc:
        _fail(str(exc))


@main.command()
@click.argument("input_path", type=click.Path(exists=True, path_type=Path))
@click.option("--source", default="gt", show_default=True,
              type=click.Choice(sorted(evaluation._SOURCE_PROVENANCE)))
@click.option("--init", "init_text", default="gtnoise:0.05", show_default=True)
@click.option("--n-restarts", default=1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--method", default="hybr", type=click.Choice(["hybr", "lm"]), show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def solve(input_path, source, init_text, n_restarts, seed, method, out):
    """Reconstruct depths and write the solution into the document."""
    try:
        strategy, sigma = parse_init(init_text)
    except ConfigError as exc:
        _fail(str(exc), 2)
    inputs = _iter_documents(input_path)
    out = Path(out)
    many = input_path.is_dir()
    if many:
        out.mkdir(parents=True, exist_ok=True)
    try:
        for src in inputs:
            d = load_drawing(src)
            pool = evaluation.detect_pool(d, source)
            config = SolveConfig(
                n_restarts=n_restarts, init_strategy=strategy, init_sigma=sigma,
                seed=seed, method=method,
            )
            outcome = reconstruct(d, pool, config)
            solution = {
                "status": outcome.status.value,
                "source": source,
                "depths": None if outcome.z is None else [float(z) for z in outcome.z],
                "satisfied": outcome.satisfied_count,
                "pool_size": len(ensure_anchor(pool, d)),
                "chosen_attempt": outcome.chosen_attempt,
                "attempts": [
                    {
                        "index": a.index,
                        "selected": None if a.selection is None else len(a.selection.system),
                        "converged": a.converged,
                        "satisfied": a.satisfied,
                    }
                    for a in outcome.attempts
                ],
            }
            dest = out / src.name if many else out
            dest.write_text(dumps_drawing(d, extra={"solution": solution}))
        click.echo(f"solved {len(inputs)} document(s)")
    except DrawingError as exc:
        _fail(str(exc))


def _parse_grid(sources: str, inits: str, restarts: str) -> list[evaluation.GridCell]:
    cells = []
    for source in sources.split(","):
        source = source.strip()
        if source not in evaluation._SOURCE_PROVENANCE:
            raise ConfigError(f"unknown constraint source {source!r}")
        for init_text in inits.split(","):
            strategy, sigma = parse_init(init_text.strip())
            for n_text in restarts.split(","):
                try:
                    n = int(n_text)
                except ValueError:
                    raise ConfigError(f"bad restart count {n_text!r}")
                cells.append(evaluation.GridCell(source, strategy, sigma, n))
    return cells


@main.command()
@click.argument("corpus_dir", type=click.Path(exists=True, file_okay=False, path_type=Path))
@click.option("--sources", default="gt", show_default=True, help="Comma list of constraint sources.")
@click.option("--inits", default="gtnoise:0.05", show_default=True, help="Comma list of init strategies.")
@click.option("--n-restarts", "restarts", default="10", show_default=True, help="Comma list of N values.")
@click.option("--seed", default=0, show_default=True)
@click.option("--jobs", default=1, show_default=True)
@click.option("--tau", default=evaluation.SUCCESS_TAU, show_default=True)
@click.option("--connected-only", is_flag=True, help="Skip deliberately disconnected scenes.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def evaluate(corpus_dir, sources, inits, restarts, seed, jobs, tau, connected_only, figures, out):
    """Run the ablation grid over a corpus and write reports."""
    try:
        cells = _parse_grid(sources, inits, restarts)
    except ConfigError as exc:
        _fail(str(exc), 2)
    try:
        corpus = evaluation.load_corpus(corpus_dir, connected_only=connected_only)
        results = evaluation.run_ablation(
            corpus, cells, seed=seed, tau=tau, jobs=jobs, progress=lambda s: click.echo(s)
        )
        evaluation.write_report(results, len(corpus), out, tau=tau, figures=figures)
    except DrawingError as exc:
        _fail(str(exc))
    click.echo(f"report written to {out}")


_PIPELINE_KEYS = {"version", "seed", "jobs", "out", "corpus", "detect", "solve", "evaluate"}
_CORPUS_KEYS = {"n", "dir", "families", "allow_disconnected", "view"}
_DETECT_KEYS = {"methods", "config"}
_SOLVE_KEYS = {"sources", "inits", "n_restarts"}
_EVALUATE_KEYS = {"tau", "figures", "connected_only"}


def _run_pipeline(config: dict) -> Path:
    _check_keys(config, _PIPELINE_KEYS, "pipeline config")
    version = config.get("version", 1)
    if version != 1:
        raise ConfigError(f"unsupported config version {version}")
    seed = int(config.get("seed", 0))
    jobs = int(config.get("jobs", 1))
    out = Path(config.get("out", "pipeline-out"))
    corpus_cfg = config.get("corpus", {})
    _check_keys(corpus_cfg, _CORPUS_KEYS, "corpus config")
    detect_cfg = config.get("detect", {})
    _check_keys(detect_cfg, _DETECT_KEYS, "detect config")
    solve_cfg = config.get("solve", {})
    _check_keys(solve_cfg, _SOLVE_KEYS, "solve config")
    eval_cfg = config.get("evaluate", {})
    _check_keys(eval_cfg, _EVALUATE_KEYS, "evaluate config")

    out.mkdir(parents=True, exist_ok=True)
    if corpus_cfg.get("dir"):
        corpus_dir = Path(corpus_cfg["dir"])
    else:
        corpus_dir = out / "corpus"
        weights = None
        if corpus_cfg.get("families"):
            weights = {scenes.Family(k): float(v) for k, v in corpus_cfg["families"].items()}
        scenes.generate_corpus(
            int(corpus_cfg.get("n", 20)), seed, corpus_dir,
            weights=weights,
            allow_disconnected=bool(corpus_cfg.get("allow_disconnected", False)),
            view=str(corpus_cfg.get("view", "mixed")),
        )

    det_config = detector_config_from_dict(detect_cfg.get("config", {}))
    sources = solve_cfg.get("sources", ["gt"])
    inits = solve_cfg.get("inits", ["gtnoise:0.05"])
    n_restarts = solve_cfg.get("n_restarts", [1, 10])
    cells = []
    for source in sources:
        if source not in evaluation._SOURCE_PROVENANCE:
            raise ConfigError(f"unknown constraint source {source!r}")
        for init_text in inits:
            strategy, sigma = parse_init(init_text)
            for n in n_restarts:
                cells.append(evaluation.GridCell(source, strategy, sigma, int(n)))

    corpus = evaluation.load_corpus(corpus_dir, connected_only=bool(eval_cfg.get("connected_only", False)))
    results = evaluation.run_ablation(
        corpus, cells, seed=seed, detector_config=det_config,
        tau=float(eval_cfg.get("tau", evaluation.SUCCESS_TAU)), jobs=jobs,
        progress=lambda s: click.echo(s),
    )
    evaluation.write_report(
        results, len(corpus), out / "report",
        tau=float(eval_cfg.get("tau", evaluation.SUCCESS_TAU)),
        figures=bool(eval_cfg.get("figures", True)),
    )
    return out


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, path_type=Path))
def pipeline(config_path):
    """Run generate, detect, solve, and evaluate from one config file."""
    try:
        config = json.loads(config_path.read_text())
    except json.JSONDecodeError as exc:
        _fail(f"config is not valid JSON: {exc}", 2)
    try:
        out = _run_pipeline(config)
    except ConfigError as exc:
        _fail(str(exc), 2)
    except (DrawingError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"pipeline finished; artifacts in {out}")


if __name__ == "__main__":
    main()
