"""
Dataset ingestion and the refinement benchmark.

A dataset is a ``manifest.json`` listing scenes (image, difficulty, prior masks,
ground truth as masks or VIA polygons, optional external edge maps). Every
method turns a scene's priors into predicted masks, which are matched to the
ground truth and scored by mean IoU.
"""

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from tabulate import tabulate

from orchestrator.runner import ordered_batch

from .cluster import derive_seed
from .config import PipelineConfig
from .edges import detect_edges, ingest_edge_map
from .errors import DatasetError, DimensionMismatch, PlaneRefineError
from .geom import Point, Polygon, rasterize
from .models import (
    BenchmarkModel,
    Difficulty,
    Manifest,
    ManifestScene,
    SceneScoreModel,
    SkippedSceneModel,
)
from .raster import EdgeMap, RasterMask, check_same_size, load_gray, load_mask, mask_iou, read_size
from .refine import fallback_mask, refine_mask

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
CATEGORY_ROWS = (("Easy", Difficulty.EASY), ("Medium", Difficulty.MEDIUM), ("Hard", Difficulty.HARD))


@dataclass(frozen=True, eq=False)
class SceneRecord:
    scene_id: str
    image_path: Path
    difficulty: Difficulty
    size: Tuple[int, int]
    prior_paths: Tuple[Path, ...]
    gt_masks: Tuple[RasterMask, ...]
    edge_map_paths: Dict[str, Path] = field(default_factory=dict)


@dataclass(frozen=True)
class MethodSpec:
    """
    How a benchmark column produces masks.

    ``prior`` scores the upstream masks as-is, ``fallback`` their simplified
    hulls, ``refine`` runs the refinement on an edge source: ``canny``,
    ``canny-lowres`` or ``external:<edge_maps key>`` (``resize`` scales the
    external map to the image).
    """

    name: str
    kind: Literal["prior", "fallback", "refine"]
    edge_source: str = "canny"
    resize: bool = False


DEFAULT_METHODS: Tuple[MethodSpec, ...] = (
    MethodSpec("PlaneRCNN", "prior"),
    MethodSpec("Fallback", "fallback"),
    MethodSpec("Dexi LR", "refine", "external:dexi_lr", resize=True),
    MethodSpec("Dexi FR", "refine", "external:dexi_fr"),
    MethodSpec("Canny", "refine", "canny"),
)


def parse_method(text: str) -> MethodSpec:
    """
    Parse ``Name=prior``, ``Name=fallback`` or ``Name=refine:<source>`` where source is
    ``canny``, ``canny-lowres``, ``external:<key>`` or ``external-resized:<key>``.
    """
    name, sep, body = text.partition("=")
    if not sep or not name.strip():
        raise ValueError(f"Method '{text}' must look like Name=kind[:source]")
    kind, _, source = body.partition(":")
    if kind in ("prior", "fallback") and not source:
        return MethodSpec(name.strip(), kind)
    if kind != "refine":
        raise ValueError(f"Unknown method kind '{kind}' in '{text}'")
    if source in ("canny", "canny-lowres"):
        return MethodSpec(name.strip(), "refine", source)
    for prefix, resize in (("external-resized:", True), ("external:", False)):
        if source.startswith(prefix) and len(source) > len(prefix):
            return MethodSpec(name.strip(), "refine", "external:" + source[len(prefix):], resize)
    raise ValueError(f"Unknown edge source '{source}' in '{text}'")


def select_methods(names: Iterable[str]) -> Tuple[MethodSpec, ...]:
    """Pick default methods by column name (case-insensitive), or parse full method specs."""
    by_name = {m.name.lower(): m for m in DEFAULT_METHODS}
    chosen = []
    for name in names:
        if "=" in name:
            chosen.append(parse_method(name))
        elif name.strip().lower() in by_name:
            chosen.append(by_name[name.strip().lower()])
        else:
            raise ValueError(f"Unknown method '{name}'; known: {', '.join(m.name for m in DEFAULT_METHODS)}")
    return tuple(chosen)


def _json_path(location: Sequence[Union[str, int]]) -> str:
    path = "$"
    for part in location:
        path += f"[{part}]" if isinstance(part, int) else f".{part}"
    return path


def load_via_polygons(path: Union[str, Path], image_name: Optional[str] = None) -> List[Polygon]:
    """
    Polygons from a VIA annotation export or project file.

    ``polygon``/``polyline`` and ``rect`` regions are read; vertices are taken as
    pixel-centre coordinates.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError("annotation file not found", path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON ({exc.msg}, line {exc.lineno})", path, "$") from exc
    if not isinstance(data, dict):
        raise DatasetError("expected a JSON object", path, "$")

    metadata = data.get("_via_img_metadata", data)
    prefix = "$._via_img_metadata" if "_via_img_metadata" in data else "$"
    entries = [(key, value) for key, value in metadata.items() if isinstance(value, dict) and "regions" in value]
    if image_name is not None:
        matching = [(k, v) for k, v in entries if v.get("filename") == image_name]
        if matching or len(entries) != 1:
            entries = matching
    if not entries:
        raise DatasetError(f"no annotation for image '{image_name}'", path, prefix)

    polygons: List[Polygon] = []
    for key, entry in entries:
        regions = entry["regions"]
        items = regions.items() if isinstance(regions, dict) else enumerate(regions)
        for index, region in items:
            where = f"{prefix}.{key}.regions[{index}].shape_attributes"
            shape = region.get("shape_attributes", {}) if isinstance(region, dict) else {}
            kind = shape.get("name")
            try:
                if kind in ("polygon", "polyline"):
                    xs, ys = shape["all_points_x"], shape["all_points_y"]
                    if len(xs) != len(ys):
                        raise DatasetError("all_points_x and all_points_y differ in length", path, where)
                    polygons.append(Polygon(tuple(Point(float(x), float(y)) for x, y in zip(xs, ys))))
                elif kind == "rect":
                    x, y = float(shape["x"]), float(shape["y"])
                    w, h = float(shape["width"]), float(shape["height"])
                    polygons.append(Polygon((Point(x, y), Point(x + w, y), Point(x + w, y + h), Point(x, y + h))))
                else:
                    logger.warning("%s: skipping unsupported region shape %r at %s", path, kind, where)
            except DatasetError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                raise DatasetError(f"invalid region ({exc})", path, where) from exc
    return polygons


def _resolve(base: Path, relative: str, manifest_path: Path, json_path: str) -> Path:
    resolved = (base / relative).resolve() if not Path(relative).is_absolute() else Path(relative)
    if not resolved.is_file():
        raise DatasetError(f"missing file {resolved}", manifest_path, json_path)
    return resolved


def _load_scene(base: Path, index: int, scene: ManifestScene, manifest_path: Path) -> SceneRecord:
    at = f"$.scenes[{index}]"
    image_path = _resolve(base, scene.image, manifest_path, f"{at}.image")
    try:
        size = read_size(image_path)
    except PlaneRefineError as exc:
        raise DatasetError(str(exc), image_path, f"{at}.image") from exc

    priors = []
    for i, relative in enumerate(scene.priors):
        prior_path = _resolve(base, relative, manifest_path, f"{at}.priors[{i}]")
        if read_size(prior_path) != size:
            raise DatasetError(f"prior size {read_size(prior_path)} differs from image size {size}",
                               prior_path, f"{at}.priors[{i}]")
        priors.append(prior_path)

    gt: List[RasterMask] = []
    for i, relative in enumerate(scene.gt_masks):
        gt_path = _resolve(base, relative, manifest_path, f"{at}.gt_masks[{i}]")
        mask = load_mask(gt_path)
        if mask.size != size:
            raise DatasetError(f"ground-truth size {mask.size} differs from image size {size}",
                               gt_path, f"{at}.gt_masks[{i}]")
        gt.append(mask)
    if scene.gt_via:
        via_path = _resolve(base, scene.gt_via, manifest_path, f"{at}.gt_via")
        for polygon in load_via_polygons(via_path, image_path.name):
            gt.append(RasterMask(rasterize(polygon, *size)))
    if not gt:
        raise DatasetError("scene has no ground-truth regions", manifest_path, at)

    edge_maps = {key: _resolve(base, relative, manifest_path, f"{at}.edge_maps.{key}")
                 for key, relative in sorted(scene.edge_maps.items())}
    return SceneRecord(scene.id, image_path, scene.difficulty, size, tuple(priors), tuple(gt), edge_maps)


def load_dataset(root: Union[str, Path]) -> List[SceneRecord]:
    """
    Load and validate a dataset.

    Args:
        root: Dataset directory containing manifest.json, or the manifest file itself.

    Returns:
        Scene records in manifest order.
    """
    root = Path(root)
    manifest_path = root / MANIFEST_NAME if root.is_dir() else root
    if not manifest_path.is_file():
        raise DatasetError("manifest not found", manifest_path)
    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON ({exc.msg}, line {exc.lineno})", manifest_path, "$") from exc
    try:
        manifest = Manifest.model_validate(raw)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise DatasetError(first["msg"], manifest_path, _json_path(first["loc"])) from exc

    base = manifest_path.parent
    scenes = [_load_scene(base, i, scene, manifest_path) for i, scene in enumerate(manifest.scenes)]
    logger.info("Loaded %d scenes from %s", len(scenes), manifest_path)
    return scenes


def match_and_score(predicted: Sequence[RasterMask], gt: Sequence[RasterMask]) -> float:
    """
    Greedy one-to-one matching by descending IoU; returns the summed matched IoU over |gt|.

    Unmatched ground-truth regions count as zero.
    """
    if not gt:
        raise ValueError("At least one ground-truth mask is required")
    for mask in list(predicted) + list(gt[1:]):
        check_same_size(gt[0], mask, "mask")
    if not predicted:
        return 0.0

    ious = np.array([[mask_iou(p, g) for g in gt] for p in predicted])
    total = 0.0
    while True:
        p, g = np.unravel_index(int(np.argmax(ious)), ious.shape)
        best = float(ious[p, g])
        if best <= 0.0:
            break
        total += best
        ious[p, :] = -1.0
        ious[:, g] = -1.0
    return total / len(gt)


@dataclass(frozen=True)
class SceneScore:
    scene_id: str
    difficulty: Difficulty
    scores: Dict[str, float]


@dataclass
class BenchmarkResult:
    methods: List[str]
    scene_scores: List[SceneScore]
    skipped: List[Tuple[str, str]] = field(default_factory=list)

    def category_means(self) -> Dict[str, Dict[str, Optional[float]]]:
        """Mean of per-scene scores for Easy, Medium, Hard and All; None where a row is empty."""
        rows = [(label, [s for s in self.scene_scores if s.difficulty == d]) for label, d in CATEGORY_ROWS]
        rows.append(("All", list(self.scene_scores)))
        return {
            label: {m: (float(np.mean([s.scores[m] for s in scenes])) if scenes else None) for m in self.methods}
            for label, scenes in rows
        }

    def table(self, tablefmt: str = "github") -> str:
        means = self.category_means()
        rows = [[label] + [f"{v * 100:.2f}%" if v is not None else "-" for v in (means[label][m] for m in self.methods)]
                for label in means]
        return tabulate(rows, headers=[""] + self.methods, tablefmt=tablefmt)

    def to_model(self) -> BenchmarkModel:
        return BenchmarkModel(
            methods=self.methods,
            scenes=[SceneScoreModel(scene_id=s.scene_id, difficulty=s.difficulty, scores=s.scores)
                    for s in self.scene_scores],
            categories=self.category_means(),
            skipped=[SkippedSceneModel(scene_id=sid, error=err) for sid, err in self.skipped],
        )

    def write(self, out_dir: Union[str, Path]) -> List[Path]:
        """Write table.txt, scores.csv and results.json; returns the written paths."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        table_path = out_dir / "table.txt"
        table_path.write_text(self.table() + "\n", encoding="utf-8")

        csv_path = out_dir / "scores.csv"
        with csv_path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["scene_id", "difficulty"] + self.methods)
            for s in self.scene_scores:
                writer.writerow([s.scene_id, s.difficulty.value] + [f"{s.scores[m]:.6f}" for m in self.methods])

        json_path = out_dir / "results.json"
        json_path.write_text(self.to_model().model_dump_json(indent=2) + "\n", encoding="utf-8")
        return [table_path, csv_path, json_path]


def _edges_for(method: MethodSpec, scene: SceneRecord, cfg: PipelineConfig, cache: Dict[str, EdgeMap]) -> EdgeMap:
    key = f"{method.edge_source}|{method.resize}"
    if key in cache:
        return cache[key]
    refine_cfg = cfg.refine
    if method.edge_source in ("canny", "canny-lowres"):
        low = cfg.low_resolution if method.edge_source == "canny-lowres" else None
        edges = detect_edges(load_gray(scene.image_path), refine_cfg.canny_sigma, refine_cfg.canny_low_ratio, low)
    elif method.edge_source.startswith("external:"):
        name = method.edge_source[len("external:"):]
        if name not in scene.edge_map_paths:
            raise DatasetError(f"scene has no edge map '{name}' for method {method.name}")
        edges = ingest_edge_map(scene.edge_map_paths[name], cfg.edge_threshold,
                                scene.size if method.resize else None)
        if edges.size != scene.size:
            raise DimensionMismatch(scene.size, edges.size, f"edge map '{name}'")
    else:
        raise ValueError(f"Unknown edge source '{method.edge_source}'")
    cache[key] = edges
    return edges


def evaluate_scene(scene: SceneRecord, methods: Sequence[MethodSpec], cfg: PipelineConfig) -> SceneScore:
    """Score every method on one scene."""
    width, height = scene.size
    priors = []
    for path in scene.prior_paths:
        prior = load_mask(path)
        if prior.is_empty:
            logger.warning("Scene %s: prior %s is empty, ignored", scene.scene_id, path.name)
            continue
        priors.append(prior)

    cache: Dict[str, EdgeMap] = {}
    scores: Dict[str, float] = {}
    for method in methods:
        if method.kind == "prior":
            predicted = priors
        elif method.kind == "fallback":
            predicted = [RasterMask(rasterize(fallback_mask(p, cfg.refine.max_fallback_points), width, height))
                         for p in priors]
        else:
            edges = _edges_for(method, scene, cfg, cache)
            predicted = [
                refine_mask(p, edges, cfg.refine, mask_id=f"{scene.scene_id}/{i}",
                            seed=derive_seed(cfg.refine.seed, i)).refined_mask
                for i, p in enumerate(priors)
            ]
        scores[method.name] = match_and_score(predicted, scene.gt_masks)
    logger.debug("Scene %s: %s", scene.scene_id, scores)
    return SceneScore(scene.scene_id, scene.difficulty, scores)


def run_benchmark(scenes: Sequence[SceneRecord], methods: Sequence[MethodSpec] = DEFAULT_METHODS,
                  cfg: Optional[PipelineConfig] = None, callbacks: Optional[list] = None) -> BenchmarkResult:
    """
    Evaluate every scene with every method.

    Scenes run independently (``cfg.parallelism`` at a time) and are reduced in
    manifest order; a scene failing with a PlaneRefineError is skipped and listed.
    """
    cfg = cfg or PipelineConfig()
    if not methods:
        raise ValueError("At least one method is required")
    names = [m.name for m in methods]
    if len(set(names)) != len(names):
        raise ValueError(f"Method names must be unique: {names}")

    outcomes = ordered_batch(lambda scene: evaluate_scene(scene, methods, cfg), scenes,
                             cfg.parallelism, name="evaluate_scene", callbacks=callbacks)
    result = BenchmarkResult(names, [])
    for scene, outcome in zip(scenes, outcomes):
        if isinstance(outcome, PlaneRefineError):
            logger.warning("Scene %s skipped: %s", scene.scene_id, outcome)
            result.skipped.append((scene.scene_id, str(outcome)))
        elif isinstance(outcome, Exception):
            raise outcome
        else:
            result.scene_scores.append(outcome)
    return result
