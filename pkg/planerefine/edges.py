"""
Edge detection: Sobel gradients, Otsu thresholds, adaptive Canny, Harris corners
and ingestion of edge maps produced by external detectors.
"""

import logging
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import DegenerateHistogram, ImageTooSmall
from .raster import EdgeMap, GrayImage, load_gray, resize_bilinear

logger = logging.getLogger(__name__)

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

# Following neighbour (dx, dy) for each quantised gradient direction; the
# preceding neighbour is the opposite offset.
_NMS_OFFSETS = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}


@dataclass(frozen=True, eq=False)
class GradientField:
    """Sobel responses; ``direction`` lies in (-pi, pi]."""

    gx: np.ndarray
    gy: np.ndarray
    magnitude: np.ndarray
    direction: np.ndarray


@dataclass(frozen=True, eq=False)
class CornerSet:
    """Corner positions as integer (x, y) rows with their Harris responses."""

    points: np.ndarray
    responses: np.ndarray

    @classmethod
    def empty(cls) -> "CornerSet":
        return cls(np.zeros((0, 2), dtype=int), np.zeros(0))

    def __len__(self) -> int:
        return len(self.points)


def _require_size(width: int, height: int, minimum: int = 3) -> None:
    if width < minimum or height < minimum:
        raise ImageTooSmall(f"Image is {width}x{height}, at least {minimum}x{minimum} is required")


def _gradients(values: np.ndarray) -> GradientField:
    gx = ndimage.correlate(values, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(values, SOBEL_Y, mode="nearest")
    direction = np.arctan2(gy, gx)
    direction[direction <= -np.pi] = np.pi
    return GradientField(gx, gy, np.hypot(gx, gy), direction)


def sobel(image: GrayImage) -> GradientField:
    """3x3 Sobel gradients with replicated borders."""
    _require_size(image.width, image.height)
    return _gradients(image.data.astype(float))


def otsu_threshold(histogram: Sequence[int]) -> int:
    """
    Level t maximising the between-class variance of {<= t} and {> t}.

    The comparison is exact (integer arithmetic), ties resolve to the smallest t.
    """
    counts = np.asarray(histogram)
    if counts.ndim != 1:
        raise ValueError("histogram must be one-dimensional")
    if np.any(counts < 0):
        raise ValueError("histogram counts must be non-negative")
    if np.count_nonzero(counts) < 2:
        raise DegenerateHistogram("Otsu needs at least two populated levels")

    counts = [int(c) for c in counts]
    total_n = sum(counts)
    total_s = sum(level * c for level, c in enumerate(counts))
    best_level, best_score = 0, Fraction(-1)
    n0 = s0 = 0
    for level, c in enumerate(counts):
        n0 += c
        s0 += level * c
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        s1 = total_s - s0
        # proportional to w0 * w1 * (mu0 - mu1)^2
        score = Fraction((s0 * n1 - s1 * n0) ** 2, n0 * n1)
        if score > best_score:
            best_level, best_score = level, score
    return best_level


def non_max_suppression(field: GradientField) -> np.ndarray:
    """Magnitudes that are ridge maxima across the quantised gradient direction; zero elsewhere."""
    magnitude = field.magnitude
    height, width = magnitude.shape
    padded = np.pad(magnitude, 1)
    angle = np.degrees(np.mod(field.direction, np.pi))
    bins = (np.floor((angle + 22.5) / 45.0).astype(int)) % 4

    def neighbour(dx: int, dy: int) -> np.ndarray:
        return padded[1 + dy:1 + dy + height, 1 + dx:1 + dx + width]

    keep = np.zeros_like(magnitude, dtype=bool)
    for direction_bin, (dx, dy) in _NMS_OFFSETS.items():
        selected = bins == direction_bin
        keep |= selected & (magnitude > neighbour(-dx, -dy)) & (magnitude >= neighbour(dx, dy))
    return np.where(keep, magnitude, 0.0)


def _canny(values: np.ndarray, sigma: float, low_ratio: float) -> np.ndarray:
    blurred = ndimage.gaussian_filter(values, sigma, mode="nearest")
    field = _gradients(blurred)
    thin = non_max_suppression(field)
    peak = float(field.magnitude.max())
    if peak <= 0.0 or not thin.any():
        return np.zeros(values.shape, dtype=bool)

    levels = np.rint(field.magnitude / peak * 255.0).astype(int)
    try:
        level = otsu_threshold(np.bincount(levels.ravel(), minlength=256))
    except DegenerateHistogram:
        return np.zeros(values.shape, dtype=bool)

    high = level / 255.0 * peak
    low = low_ratio * high
    strong = thin > high
    weak = thin > low
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    seeded = np.unique(labels[strong])
    seeded = seeded[seeded > 0]
    logger.debug("Canny: otsu level %d, high %.3f, %d strong pixels", level, high, int(strong.sum()))
    return np.isin(labels, seeded)


def adaptive_canny(image: GrayImage, sigma: float = 1.4, low_ratio: float = 0.5) -> EdgeMap:
    """Canny edge detector whose high threshold is Otsu's level of the gradient magnitude histogram."""
    _require_size(image.width, image.height)
    return EdgeMap(_canny(image.data.astype(float), sigma, low_ratio))


def detect_edges(image: GrayImage, sigma: float = 1.4, low_ratio: float = 0.5,
                 low_resolution: Optional[Tuple[int, int]] = None) -> EdgeMap:
    """
    Run adaptive Canny, optionally on a downsized copy of the image.

    With ``low_resolution`` the image is bilinearly resized to that (width, height),
    edges are detected there and the map is resized back to the input size.
    """
    if low_resolution is None or tuple(low_resolution) == image.size:
        return adaptive_canny(image, sigma, low_ratio)
    _require_size(*low_resolution)
    small = resize_bilinear(image.data.astype(float), low_resolution)
    edges = _canny(small.astype(float), sigma, low_ratio)
    restored = resize_bilinear(edges.astype(np.float32), image.size)
    return EdgeMap(restored >= 0.5)


def ingest_edge_map(path: Union[str, Path], threshold: int = 128,
                    resize_to: Optional[Tuple[int, int]] = None) -> EdgeMap:
    """
    Read an edge map computed by another detector.

    Args:
        path: Gray or colour image; colour is reduced to luma first.
        threshold: Gray level at or above which a pixel is an edge.
        resize_to: Optional (width, height); the strengths are bilinearly resized before thresholding.
    """
    gray = load_gray(path)
    values = gray.data
    if resize_to is not None and tuple(resize_to) != gray.size:
        values = resize_bilinear(values, tuple(resize_to))
        logger.debug("Resized edge map %s from %s to %s", path, gray.size, tuple(resize_to))
    return EdgeMap(values >= threshold)


def _check_harris(k: float, window: int) -> None:
    if not 0.02 <= k <= 0.2:
        raise ValueError(f"Harris k must be in [0.02, 0.2], got {k}")
    if window < 3 or window % 2 == 0:
        raise ValueError(f"Harris window must be odd and at least 3, got {window}")


def harris_response(bits: np.ndarray, k: float = 0.04, window: int = 5) -> np.ndarray:
    """R = det(M) - k * trace(M)^2 with M the box-averaged structure tensor."""
    _check_harris(k, window)
    values = np.asarray(bits, dtype=float)
    gx = ndimage.correlate(values, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(values, SOBEL_Y, mode="nearest")
    sxx = ndimage.uniform_filter(gx * gx, size=window, mode="nearest")
    syy = ndimage.uniform_filter(gy * gy, size=window, mode="nearest")
    sxy = ndimage.uniform_filter(gx * gy, size=window, mode="nearest")
    return sxx * syy - sxy * sxy - k * (sxx + syy) ** 2


def harris_corners(edges: EdgeMap, k: float = 0.04, window: int = 5,
                   rel_threshold: float = 0.1) -> CornerSet:
    """
    Harris corners of a binary map.

    Corners are local maxima of the response with R >= rel_threshold * max(R);
    of two maxima closer than ``window`` pixels only the stronger is kept.
    """
    _check_harris(k, window)
    if edges.is_empty:
        return CornerSet.empty()
    response = harris_response(edges.bits, k, window)
    peak = float(response.max())
    if peak <= 0.0:
        return CornerSet.empty()

    local = response == ndimage.maximum_filter(response, size=window, mode="constant", cval=-np.inf)
    candidates = local & (response > 0.0) & (response >= rel_threshold * peak)
    ys, xs = np.nonzero(candidates)
    strengths = response[ys, xs]
    order = np.lexsort((xs, ys, -strengths))

    kept = []
    for index in order:
        x, y = int(xs[index]), int(ys[index])
        if all((x - kx) ** 2 + (y - ky) ** 2 > window * window for kx, ky, _ in kept):
            kept.append((x, y, float(strengths[index])))
    if not kept:
        return CornerSet.empty()
    points = np.array([(x, y) for x, y, _ in kept], dtype=int)
    return CornerSet(points, np.array([r for _, _, r in kept]))
