"""
Seeded synthetic planar scenes with known ground truth.

Each scene holds one rhombus on a textured background, a perturbed prior mask
(eroded or dilated until its IoU with the ground truth is in [0.80, 0.92]) and
an edge map made of the ground-truth contour, dilated by one pixel, plus salt
noise.
"""

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from .cluster import derive_seed
from .errors import DegenerateGeometry
from .geom import Point, Polygon, rasterize
from .models import Difficulty
from .raster import (
    EdgeMap,
    GrayImage,
    RasterMask,
    dilate,
    erode,
    mask_contour,
    mask_iou,
    save_bits,
    save_gray,
)

logger = logging.getLogger(__name__)

PRIOR_IOU_RANGE = (0.80, 0.92)


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    image: GrayImage
    polygon: Polygon
    ground_truth: RasterMask
    prior: RasterMask
    edges: EdgeMap
    difficulty: Difficulty

    @property
    def prior_iou(self) -> float:
        return mask_iou(self.prior, self.ground_truth)


def random_rhombus(rng: np.random.Generator, width: int, height: int, min_area: float = 5000.0,
                   angle_range: Tuple[float, float] = (35.0, 145.0), margin: float = 15.0) -> Polygon:
    """A rhombus of at least ``min_area`` px^2 with corner angles in ``angle_range`` degrees, inside the frame."""
    for _ in range(1000):
        alpha = math.radians(rng.uniform(*angle_range))
        side = math.sqrt(min_area / math.sin(alpha)) * rng.uniform(1.02, 1.3)
        phi = rng.uniform(0.0, math.pi)
        u = side * np.array([math.cos(phi), math.sin(phi)])
        v = side * np.array([math.cos(phi + alpha), math.sin(phi + alpha)])
        offsets = np.array([np.zeros(2), u, u + v, v]) - (u + v) / 2.0
        reach_x, reach_y = np.abs(offsets).max(axis=0)
        lo_x, hi_x = margin + reach_x, width - 1 - margin - reach_x
        lo_y, hi_y = margin + reach_y, height - 1 - margin - reach_y
        if lo_x > hi_x or lo_y > hi_y:
            continue
        centre = np.array([rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y)])
        return Polygon(tuple(Point(*(centre + o)) for o in offsets))
    raise DegenerateGeometry(f"No rhombus of area {min_area} fits a {width}x{height} frame")


def _texture(rng: np.random.Generator, width: int, height: int, base: float, amplitude: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    fx, fy = rng.uniform(5.0, 15.0, size=2)
    waves = amplitude * np.sin(xs / fx + rng.uniform(0, 2 * math.pi)) * np.cos(ys / fy)
    return base + waves + rng.normal(0.0, 6.0, size=(height, width))


def perturb_prior(ground_truth: RasterMask, rng: np.random.Generator,
                  iou_range: Tuple[float, float] = PRIOR_IOU_RANGE) -> RasterMask:
    """Erode or dilate the ground truth so that its IoU with the result lands in ``iou_range``."""
    options = [(op, radius) for radius in range(1, 9) for op in (erode, dilate)]
    order = rng.permutation(len(options))
    best, best_gap = None, math.inf
    for index in order:
        op, radius = options[int(index)]
        candidate = op(ground_truth, radius)
        if candidate.is_empty:
            continue
        iou = mask_iou(candidate, ground_truth)
        if iou_range[0] <= iou <= iou_range[1]:
            return candidate
        gap = min(abs(iou - iou_range[0]), abs(iou - iou_range[1]))
        if gap < best_gap:
            best, best_gap = candidate, gap
    if best is None:
        raise DegenerateGeometry("Ground truth is too small to perturb")
    return best


def make_scene(seed: int, width: int = 400, height: int = 300, noise: float = 0.05) -> SyntheticScene:
    """Build one scene; equal seeds give identical scenes."""
    rng = np.random.default_rng(seed)
    polygon = random_rhombus(rng, width, height)
    ground_truth = RasterMask(rasterize(polygon, width, height))

    background = _texture(rng, width, height, base=80.0, amplitude=25.0)
    face = _texture(rng, width, height, base=175.0, amplitude=12.0)
    pixels = np.where(ground_truth.bits, face, background)
    image = GrayImage(np.clip(np.rint(pixels), 0, 255).astype(np.uint8))

    salt = rng.random((height, width)) < noise
    edges = EdgeMap(dilate(mask_contour(ground_truth), 1).bits | salt)
    prior = perturb_prior(ground_truth, rng)

    iou = mask_iou(prior, ground_truth)
    difficulty = Difficulty.EASY if iou >= 0.88 else Difficulty.MEDIUM if iou >= 0.84 else Difficulty.HARD
    return SyntheticScene(image, polygon, ground_truth, prior, edges, difficulty)


def write_suite(root: Union[str, Path], count: int, seed: int = 0, width: int = 400,
                height: int = 300, noise: float = 0.05) -> Path:
    """
    Write ``count`` scenes and a manifest.json under ``root``.

    The edge maps are registered under the ``synthetic`` key.

    Returns:
        Path of the manifest.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for index in range(count):
        scene = make_scene(derive_seed(seed, index), width, height, noise)
        name = f"scene_{index:03d}"
        folder = root / name
        folder.mkdir(exist_ok=True)
        save_gray(scene.image, folder / "image.png")
        save_bits(scene.prior, folder / "prior_0.png")
        save_bits(scene.ground_truth, folder / "gt_0.png")
        save_bits(scene.edges, folder / "edges.png")
        (folder / "polygon.json").write_text(json.dumps(scene.polygon.to_dict()) + "\n", encoding="utf-8")
        entries.append({
            "id": name,
            "image": f"{name}/image.png",
            "difficulty": scene.difficulty.value,
            "priors": [f"{name}/prior_0.png"],
            "gt_masks": [f"{name}/gt_0.png"],
            "edge_maps": {"synthetic": f"{name}/edges.png"},
        })
    manifest = root / "manifest.json"
    manifest.write_text(json.dumps({"scenes": entries}, indent=2) + "\n", encoding="utf-8")
    logger.info("Wrote %d synthetic scenes to %s", count, root)
    return manifest
