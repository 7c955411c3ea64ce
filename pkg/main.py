"""
Command line for plane mask refinement.

    python main.py edges IMAGE --out edges.png
    python main.py refine IMAGE PRIORS_DIR --out results/ [--gt GT_DIR] [--overlay]
    python main.py eval DATASET --out report/ [--method Canny ...]
    python main.py render IMAGE POLYGON.json ... --out overlay.png
    python main.py synth OUT_DIR --count 50

Common options go before the command: --config, --set KEY=VALUE, --seed,
--parallelism, --verbose. Exit status is 0 on success, 1 when some masks or
scenes failed, 2 on bad input or configuration.
"""

import logging
from pathlib import Path
from typing import Dict, List, NoReturn, Optional

import typer
from dotenv import load_dotenv
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from tabulate import tabulate

from orchestrator import RefinementOrchestrator, RunLedger, StageCallbackHandler
from orchestrator.pipeline import image_files
from planerefine.config import PipelineConfig, load_config
from planerefine.errors import DatasetError, DimensionMismatch, ImageNotFound, MalformedImage, PlaneRefineError
from planerefine.eval import DEFAULT_METHODS, load_dataset, match_and_score, run_benchmark, select_methods
from planerefine.geom import Polygon
from planerefine.models import PolygonModel
from planerefine.raster import load_gray, load_mask, save_bits
from planerefine.synthetic import write_suite
from utils.overlay import save_overlay

# PLANEREFINE_* settings from a .env in the working directory
load_dotenv()

app = typer.Typer(help="Refine plane segmentation masks with image edges.", no_args_is_help=True,
                  add_completion=False)
console = Console()
err_console = Console(stderr=True)
logger = logging.getLogger("planerefine.cli")

INPUT_ERRORS = (ImageNotFound, MalformedImage, DimensionMismatch, DatasetError)


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)],
        force=True,
    )


def _fail(message: str, code: int = 2) -> NoReturn:
    err_console.print(f"Error: {message}", style="red", markup=False, soft_wrap=True)
    raise typer.Exit(code)


def _require_path(path: Optional[Path], what: str) -> None:
    if path is not None and not path.exists():
        _fail(f"{what} not found: {path}")


def _parse_overrides(pairs: List[str]) -> Dict[str, str]:
    overrides = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise typer.BadParameter(f"'{pair}' is not KEY=VALUE", param_hint="--set")
        overrides[key.strip()] = value.strip()
    return overrides


def _config(ctx: typer.Context, **extra: str) -> PipelineConfig:
    """Build the run configuration from the global options of ``ctx``."""
    options = ctx.obj or {}
    overrides = dict(options.get("overrides", {}))
    overrides.update(extra)
    try:
        return load_config(options.get("config_file"), overrides)
    except FileNotFoundError as exc:
        _fail(str(exc))
    except (ValidationError, ValueError) as exc:
        _fail(f"Invalid configuration: {exc}")


@app.callback()
def main(
    ctx: typer.Context,
    config_file: Optional[Path] = typer.Option(None, "--config", "-c", help="KEY=value configuration file"),
    set_values: List[str] = typer.Option([], "--set", "-s", help="Override a setting, e.g. --set fallback_iou=0.8"),
    seed: Optional[int] = typer.Option(None, "--seed", help="Master random seed"),
    parallelism: Optional[int] = typer.Option(None, "--parallelism", "-j", help="Masks or scenes processed at once"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
):
    """Refine plane segmentation masks with image edges."""
    _configure_logging(verbose)
    overrides = _parse_overrides(set_values)
    if seed is not None:
        overrides["seed"] = str(seed)
    if parallelism is not None:
        overrides["parallelism"] = str(parallelism)
    ctx.obj = {"config_file": config_file, "overrides": overrides, "verbose": verbose}


@app.command("edges")
def cmd_edges(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="Input image"),
    out: Path = typer.Option(..., "--out", "-o", help="Edge map PNG to write"),
    low_res: bool = typer.Option(False, "--low-res", help="Detect on the image downsized to low_resolution"),
    external: Optional[Path] = typer.Option(None, "--external", help="Binarise this edge map instead of running Canny"),
):
    """Compute the binary edge map of an image."""
    _require_path(image, "Image")
    _require_path(external, "Edge map")
    cfg = _config(ctx, **({"edge_source": "adaptive-canny-lowres"} if low_res else {}))
    try:
        gray = load_gray(image)
        edges = RefinementOrchestrator(cfg).compute_edges(image, gray, external)
    except INPUT_ERRORS as exc:
        _fail(str(exc))
    except PlaneRefineError as exc:
        _fail(str(exc), code=1)

    out.parent.mkdir(parents=True, exist_ok=True)
    save_bits(edges, out)
    console.print(f"Edge map with {edges.count} edge pixels written to {out}", markup=False, soft_wrap=True)


def _log_improvement(priors_dir: Path, gt_dir: Path, refined_masks: list) -> None:
    ground_truth = [load_mask(p) for p in image_files(gt_dir)]
    priors = [m for m in (load_mask(p) for p in image_files(priors_dir)) if not m.is_empty]
    if not ground_truth:
        return
    before = match_and_score(priors, ground_truth)
    after = match_and_score(refined_masks, ground_truth)
    logger.info("IoU with ground truth: prior %.4f, refined %.4f (%+.2f pp)", before, after, (after - before) * 100)


@app.command("refine")
def cmd_refine(
    ctx: typer.Context,
    image: Path = typer.Argument(..., help="Input image"),
    priors: Path = typer.Argument(..., help="Directory of prior mask PNGs"),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    edges: Optional[Path] = typer.Option(None, "--edges", help="Precomputed edge map for the image"),
    gt: Optional[Path] = typer.Option(None, "--gt", help="Directory of ground-truth masks (overlay and IoU log)"),
    overlay: bool = typer.Option(False, "--overlay", help="Also write overlay.png"),
):
    """Refine every prior mask of an image."""
    _require_path(image, "Image")
    _require_path(priors, "Priors directory")
    _require_path(edges, "Edge map")
    _require_path(gt, "Ground-truth directory")
    cfg = _config(ctx)

    orchestrator = RefinementOrchestrator(cfg)
    try:
        summary = orchestrator.run(image, priors, out, gt_dir=gt, overlay=overlay, edges_path=edges)
    except INPUT_ERRORS as exc:
        _fail(str(exc))
    except PlaneRefineError as exc:
        _fail(str(exc), code=1)

    if not summary.outcomes:
        err_console.print(f"No prior masks found in {priors}", style="yellow", markup=False, soft_wrap=True)
        raise typer.Exit(0)

    rows = []
    for outcome in summary.outcomes:
        if outcome.ok:
            report = outcome.report
            status = "fallback" if report.used_fallback else "refined"
            rows.append([outcome.mask_id, status, f"{report.prior_iou:.4f}", f"{report.output_iou:.4f}",
                         len(report.refined.vertices)])
        else:
            rows.append([outcome.mask_id, "failed", "-", "-", outcome.error])
    console.print(tabulate(rows, headers=["mask", "status", "IoU assembled", "IoU output", "vertices"],
                           tablefmt="github"), markup=False, soft_wrap=True)

    if gt is not None:
        _log_improvement(priors, gt, [o.report.refined_mask for o in summary.outcomes if o.ok])
    if ctx.obj.get("verbose"):
        logger.debug("Stage timings: %s", orchestrator.callback_handler.get_performance_summary()["stage_durations"])
    if summary.failed:
        err_console.print(f"{len(summary.failed)} of {len(summary.outcomes)} masks failed", style="yellow")
    raise typer.Exit(summary.exit_code)


@app.command("eval")
def cmd_eval(
    ctx: typer.Context,
    dataset: Path = typer.Argument(..., help="Dataset directory or manifest.json"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Directory for table.txt, scores.csv, results.json"),
    methods: List[str] = typer.Option([], "--method", "-m",
                                      help="Column name or Name=kind[:source]; default: all standard columns"),
):
    """Score methods on a dataset and print the per-category IoU table."""
    _require_path(dataset, "Dataset")
    cfg = _config(ctx)
    try:
        chosen = select_methods(methods) if methods else DEFAULT_METHODS
    except ValueError as exc:
        _fail(str(exc))
    try:
        scenes = load_dataset(dataset)
    except DatasetError as exc:
        _fail(str(exc))

    ledger = RunLedger()
    try:
        result = run_benchmark(scenes, chosen, cfg, callbacks=[StageCallbackHandler(ledger)])
    except ValueError as exc:
        _fail(str(exc))
    if ctx.obj.get("verbose"):
        logger.debug("Run summary: %s", ledger.get_execution_summary())
    console.print(result.table(), markup=False, soft_wrap=True)
    if out is not None:
        for path in result.write(out):
            logger.info("Wrote %s", path)
    if result.skipped:
        for scene_id, error in result.skipped:
            err_console.print(f"Skipped {scene_id}: {error}", style="yellow", markup=False, soft_wrap=True)
        raise typer.Exit(1)


@app.command("render")
def cmd_render(
    image: Path = typer.Argument(..., help="Input image"),
    polygons: List[Path] = typer.Argument(..., help="Polygon or refinement report JSON files"),
    out: Path = typer.Option(..., "--out", "-o", help="Overlay PNG to write"),
    gt: Optional[Path] = typer.Option(None, "--gt", help="Directory of ground-truth masks"),
):
    """Draw ground-truth contours (blue) and refined polygons (red) over an image."""
    _require_path(image, "Image")
    for path in polygons:
        _require_path(path, "Polygon file")
    _require_path(gt, "Ground-truth directory")
    try:
        gray = load_gray(image)
        shapes = []
        for path in polygons:
            try:
                model = PolygonModel.model_validate_json(path.read_text(encoding="utf-8"))
                shapes.append(Polygon(tuple(model.vertices)))
            except ValueError as exc:
                _fail(f"{path}: not a polygon file ({exc})")
        ground_truth = [load_mask(p) for p in image_files(gt)] if gt is not None else []
        out.parent.mkdir(parents=True, exist_ok=True)
        save_overlay(gray, shapes, out, ground_truth)
    except INPUT_ERRORS as exc:
        _fail(str(exc))
    except ValueError as exc:
        _fail(str(exc))
    console.print(f"Overlay written to {out}", markup=False, soft_wrap=True)


@app.command("synth")
def cmd_synth(
    ctx: typer.Context,
    out: Path = typer.Argument(..., help="Directory for the synthetic dataset"),
    count: int = typer.Option(50, "--count", "-n", min=1, help="Number of scenes"),
    width: int = typer.Option(400, "--width", min=64),
    height: int = typer.Option(300, "--height", min=64),
    noise: float = typer.Option(0.05, "--noise", min=0.0, max=1.0, help="Fraction of salt noise in edge maps"),
):
    """Write seeded rhombus scenes with priors, ground truth and edge maps."""
    cfg = _config(ctx)
    try:
        manifest = write_suite(out, count, cfg.refine.seed, width, height, noise)
    except PlaneRefineError as exc:
        _fail(str(exc))
    console.print(f"{count} scenes written; manifest at {manifest}", markup=False, soft_wrap=True)


if __name__ == "__main__":
    app()
