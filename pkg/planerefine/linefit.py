"""
Straight-segment candidates along a prior mask's contour.

Two independent sources feed the candidate pool: density clusters of the edge
extract fitted with RANSAC (and later extended along the full edge map), and
Hough lines closed off by their intersections with neighbouring lines.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .cluster import NOISE, dbscan, derive_seed, ransac_line
from .config import RefineConfig
from .edges import CornerSet
from .errors import DegenerateGeometry, EmptyMask
from .geom import (
    LineSegment,
    NormalLine,
    Point,
    distance_to_segment,
    intersect,
    principal_axes,
    segment_to_normal,
)
from .raster import EdgeMap, RasterMask, check_same_size, dilate, mask_contour

logger = logging.getLogger(__name__)

SUPPORT_DISTANCE = 2.0
HOUGH_THETA_BINS = 180
MAX_HOUGH_LINES = 64
MAX_RUNS_PER_CLUSTER = 8
# a peeled run needs this many pixels per pixel of extent along its line
MIN_RUN_DENSITY = 0.5


class SegmentSource(str, Enum):
    CLUSTERING = "clustering"
    HOUGH = "hough"


@dataclass(frozen=True)
class SegmentCandidate:
    segment: LineSegment
    source: SegmentSource
    support: int

    @property
    def line(self) -> NormalLine:
        return segment_to_normal(self.segment)


@dataclass(frozen=True, eq=False)
class ContourExtract:
    """Edge pixels in the widened band around one prior mask's contour."""

    edge_map: EdgeMap
    pixels: np.ndarray
    mask_id: str = ""

    @property
    def width(self) -> int:
        return self.edge_map.width

    @property
    def height(self) -> int:
        return self.edge_map.height

    @property
    def is_empty(self) -> bool:
        return len(self.pixels) == 0


def support_pixels(segment: LineSegment, pixels: np.ndarray) -> np.ndarray:
    """Pixels within SUPPORT_DISTANCE of the segment."""
    if len(pixels) == 0:
        return np.zeros((0, 2))
    return pixels[distance_to_segment(pixels, segment) <= SUPPORT_DISTANCE]


def _support(segment: LineSegment, pixels: np.ndarray) -> int:
    return int(len(support_pixels(segment, pixels)))


def extract_contour(edges: EdgeMap, prior: RasterMask, widen_radius: int,
                    mask_id: str = "") -> ContourExtract:
    """Edge pixels lying within ``widen_radius`` (Chebyshev) of the prior's contour."""
    check_same_size(edges, prior, "edge map")
    if prior.is_empty:
        raise EmptyMask(f"Prior mask '{mask_id}' is empty")
    band = dilate(mask_contour(prior), widen_radius)
    extract = EdgeMap(edges.bits & band.bits)
    return ContourExtract(extract, extract.points(), mask_id)


def remove_specks(extract: ContourExtract, min_size: int) -> ContourExtract:
    """Drop 8-connected groups of fewer than ``min_size`` pixels from an extract."""
    if extract.is_empty:
        return extract
    labels, count = ndimage.label(extract.edge_map.bits, structure=np.ones((3, 3), dtype=bool))
    keep = np.bincount(labels.ravel(), minlength=count + 1) >= min_size
    keep[0] = False
    cleaned = EdgeMap(keep[labels])
    logger.debug("Extract %s: %d of %d pixels left after speck removal",
                 extract.mask_id or "?", cleaned.count, len(extract.pixels))
    return ContourExtract(cleaned, cleaned.points(), extract.mask_id)


def _segment_from_projection(model: NormalLine, lo: float, hi: float) -> LineSegment:
    return LineSegment(model.point_at(lo), model.point_at(hi))


def _elongated(points: np.ndarray, max_aspect: float) -> bool:
    spread, _ = principal_axes(points)
    return spread[0] > 0.0 and spread[1] / spread[0] <= max_aspect


def _straight_runs(members: np.ndarray, cfg: RefineConfig, seed: int) -> List[Tuple[np.ndarray, NormalLine]]:
    """
    Split one cluster into straight runs with their fitted lines.

    An elongated cluster is a single run. Otherwise RANSAC lines are peeled off
    one after the other for as long as each covers a dense, elongated run of at
    least ``min_cluster_px`` pixels; two sides left joined at an acute corner
    come apart this way while compact blobs yield nothing.
    """
    runs: List[Tuple[np.ndarray, NormalLine]] = []
    remaining = members
    for attempt in range(MAX_RUNS_PER_CLUSTER):
        if len(remaining) < cfg.min_cluster_px:
            break
        try:
            fit = ransac_line(remaining, cfg.ransac_tol, cfg.ransac_iterations, derive_seed(seed, attempt))
        except DegenerateGeometry:
            break
        if _elongated(remaining, cfg.max_aspect):
            runs.append((remaining[fit.inliers], fit.model))
            break
        run = remaining[fit.inliers]
        along = fit.model.project(run)
        extent = float(along.max() - along.min()) + 1.0
        if len(run) < cfg.min_cluster_px or len(run) < MIN_RUN_DENSITY * extent \
                or not _elongated(run, cfg.max_aspect):
            break
        runs.append((run, fit.model))
        remaining = np.delete(remaining, fit.inliers, axis=0)
    return runs


def segments_by_clustering(extract: ContourExtract, corners: CornerSet, cfg: RefineConfig,
                           seed: Optional[int] = None) -> List[SegmentCandidate]:
    """
    Segments from line-shaped density clusters of the extract.

    Pixels near corners are removed so the contour falls apart into straight
    runs; each run that is large and elongated enough is fitted with RANSAC.
    Clusters that are not elongated are split further by peeling RANSAC lines.
    The removed pixels that sit on a fitted line next to its ends are taken back
    so that segments reach into the corners.
    """
    seed = cfg.seed if seed is None else seed
    pixels = extract.pixels
    if len(pixels) == 0:
        return []

    removed = np.zeros(len(pixels), dtype=bool)
    if len(corners):
        distances, _ = cKDTree(corners.points.astype(float)).query(pixels)
        removed = distances <= cfg.corner_removal_radius
    kept = pixels[~removed]
    taken = pixels[removed]
    labeling = dbscan(kept, cfg.dbscan_eps, cfg.dbscan_min_pts)
    reach = cfg.corner_removal_radius + cfg.ransac_tol + 1.0

    candidates: List[SegmentCandidate] = []
    for cluster in range(labeling.k):
        members = kept[labeling.members(cluster)]
        for run, model in _straight_runs(members, cfg, derive_seed(seed, cluster)):
            along = model.project(run)
            lo, hi = float(along.min()), float(along.max())
            if len(taken):
                on_line = model.distance(taken) <= cfg.ransac_tol
                t = model.project(taken)
                regrow = on_line & (t >= lo - reach) & (t <= hi + reach)
                if regrow.any():
                    lo, hi = min(lo, float(t[regrow].min())), max(hi, float(t[regrow].max()))

            segment = _segment_from_projection(model, lo, hi)
            if segment.length == 0.0:
                continue
            support = _support(segment, pixels)
            if support < 2:
                continue
            candidates.append(SegmentCandidate(segment, SegmentSource.CLUSTERING, support))

    logger.debug("Clustering: %d corners, %d clusters, %d segments",
                 len(corners), labeling.k, len(candidates))
    return candidates


def extend_segment(candidate: SegmentCandidate, edges: EdgeMap, band_radius: float,
                   cfg: RefineConfig, seed: Optional[int] = None) -> SegmentCandidate:
    """
    Grow a segment along its own line over the whole edge map.

    Edge pixels within ``band_radius`` of the infinite line are clustered; the
    cluster closest to the segment midpoint is refitted and its extreme inliers
    along the dominant axis become the new endpoints. Segments never shrink.
    """
    seed = cfg.seed if seed is None else seed
    line = candidate.line
    pixels = edges.points()
    if len(pixels) == 0:
        return candidate
    band = pixels[line.distance(pixels) <= band_radius]
    if len(band) < 2:
        return candidate

    labeling = dbscan(band, cfg.dbscan_eps, cfg.dbscan_min_pts)
    clustered = np.flatnonzero(labeling.labels != NOISE)
    if len(clustered) == 0:
        return candidate
    midpoint = np.array(candidate.segment.midpoint)
    nearest = clustered[int(np.argmin(np.hypot(*(band[clustered] - midpoint).T)))]
    members = band[labeling.members(int(labeling.labels[nearest]))]
    try:
        fit = ransac_line(members, cfg.ransac_tol, cfg.ransac_iterations, seed)
    except DegenerateGeometry:
        return candidate

    model = fit.model
    axis = 1 if abs(model.direction[1]) > abs(model.direction[0]) else 0
    ends = np.vstack([members[fit.inliers], np.array(candidate.segment.a), np.array(candidate.segment.b)])
    start = model.foot(ends[int(np.argmin(ends[:, axis]))])
    stop = model.foot(ends[int(np.argmax(ends[:, axis]))])
    grown = LineSegment(start, stop)
    if np.dot(grown.direction, candidate.segment.direction) < 0:
        grown = grown.reversed()
    if grown.length == 0.0:
        return candidate
    return SegmentCandidate(grown, candidate.source, _support(grown, pixels))


@dataclass(frozen=True, eq=False)
class HoughAccumulator:
    """Votes indexed [rho + rho_offset, theta in whole degrees]."""

    votes: np.ndarray
    rho_offset: int
    thetas: np.ndarray

    def line(self, rho_index: float, theta_deg: float) -> NormalLine:
        return NormalLine(float(rho_index) - self.rho_offset, math.radians(theta_deg))


def hough_accumulator(pixels: np.ndarray, width: int, height: int) -> HoughAccumulator:
    """Vote every pixel into 1 px x 1 degree bins over theta in [0, 180)."""
    offset = int(math.ceil(math.hypot(width, height)))
    thetas = np.deg2rad(np.arange(HOUGH_THETA_BINS))
    cos, sin = np.cos(thetas), np.sin(thetas)
    votes = np.zeros((2 * offset + 1, HOUGH_THETA_BINS), dtype=int)
    pts = np.asarray(pixels, dtype=float).reshape(-1, 2)
    if len(pts):
        rho = np.rint(pts[:, 0:1] * cos + pts[:, 1:2] * sin).astype(int) + offset
        columns = np.broadcast_to(np.arange(HOUGH_THETA_BINS), rho.shape)
        np.add.at(votes, (rho, columns), 1)
    return HoughAccumulator(votes, offset, thetas)


def hough_peaks(accumulator: HoughAccumulator, min_votes: int, rho_window: int,
                theta_window: int) -> List[Tuple[int, int, int]]:
    """
    Local maxima with at least ``min_votes``, as (rho_index, theta_deg, votes).

    The neighbourhood is +-rho_window bins by +-theta_window degrees; theta wraps
    around with theta + 180 equivalent to (-rho, theta).
    """
    votes = accumulator.votes
    w = max(1, int(theta_window))
    wrapped = np.concatenate([votes[::-1, -w:], votes, votes[::-1, :w]], axis=1)
    local = ndimage.maximum_filter(wrapped, size=(2 * int(rho_window) + 1, 2 * w + 1),
                                   mode="constant", cval=0)[:, w:-w]
    rows, cols = np.nonzero((votes >= min_votes) & (votes == local))
    peaks = [(int(r), int(c), int(votes[r, c])) for r, c in zip(rows, cols)]
    return sorted(peaks, key=lambda p: (-p[2], p[1], p[0]))


def merge_hough_peaks(accumulator: HoughAccumulator, peaks: List[Tuple[int, int, int]],
                      rho_merge: float, theta_merge_deg: float) -> List[NormalLine]:
    """Greedily group peaks around the strongest ones and average each group by votes."""
    groups: List[List[Tuple[float, float, int]]] = []
    for rho_index, theta, count in peaks:
        rho = rho_index - accumulator.rho_offset
        for group in groups:
            seed_rho, seed_theta, _ = group[0]
            match = next(((r, t) for r, t in ((rho, theta), (-rho, theta - 180), (-rho, theta + 180))
                          if abs(r - seed_rho) <= rho_merge and abs(t - seed_theta) <= theta_merge_deg), None)
            if match is not None:
                group.append((match[0], match[1], count))
                break
        else:
            groups.append([(rho, theta, count)])

    lines = []
    for group in groups:
        weights = np.array([g[2] for g in group], dtype=float)
        rho = float(np.dot(weights, [g[0] for g in group]) / weights.sum())
        theta = float(np.dot(weights, [g[1] for g in group]) / weights.sum())
        if theta < 0.0:
            theta, rho = theta + 180.0, -rho
        elif theta >= 180.0:
            theta, rho = theta - 180.0, -rho
        lines.append(NormalLine(rho, math.radians(theta)))
    return lines


def hough_lines(pixels: np.ndarray, width: int, height: int, cfg: RefineConfig) -> List[NormalLine]:
    """
    Hough lines found one at a time, strongest first.

    Each round votes the pixels that are left, turns the group of peaks around
    the strongest one into a line and removes the pixels within
    ``ransac_tol + 1`` of it, so the flanks of a thick edge never come back as
    lines of their own. Rounds stop when the strongest peak has fewer than
    ``hough_votes`` votes or less than ``hough_rel_votes`` of the first line's.
    """
    remaining = np.asarray(pixels, dtype=float).reshape(-1, 2)
    clearance = cfg.ransac_tol + 1.0
    floor = float(cfg.hough_votes)
    lines: List[NormalLine] = []
    while len(remaining) >= 2 and len(lines) < MAX_HOUGH_LINES:
        accumulator = hough_accumulator(remaining, width, height)
        peaks = hough_peaks(accumulator, cfg.hough_votes, int(round(cfg.hough_rho_merge)),
                            int(round(cfg.hough_theta_merge_deg)))
        if not peaks:
            break
        votes = peaks[0][2]
        if not lines:
            floor = max(floor, cfg.hough_rel_votes * votes)
        elif votes < floor:
            break
        line = merge_hough_peaks(accumulator, peaks, cfg.hough_rho_merge, cfg.hough_theta_merge_deg)[0]
        lines.append(line)
        remaining = remaining[line.distance(remaining) > clearance]
    return lines


def segments_by_hough(extract: ContourExtract, cfg: RefineConfig) -> List[SegmentCandidate]:
    """
    Segments from Hough lines of the extract.

    A line's endpoints are its two most distant intersections with the other
    lines among those that fall within ``vicinity_radius`` of an extract pixel;
    lines with fewer than two such intersections are dropped.
    """
    pixels = extract.pixels
    if len(pixels) < 2:
        return []
    lines = hough_lines(pixels, extract.width, extract.height, cfg)
    tree = cKDTree(pixels)

    candidates: List[SegmentCandidate] = []
    for i, line in enumerate(lines):
        nearby: List[Point] = []
        for j, other in enumerate(lines):
            if i == j:
                continue
            crossing = intersect(line, other)
            if crossing is None:
                continue
            distance, _ = tree.query(np.array(crossing))
            if distance <= cfg.vicinity_radius:
                nearby.append(crossing)
        if len(nearby) < 2:
            continue
        along = line.project(nearby)
        segment = LineSegment(nearby[int(np.argmin(along))], nearby[int(np.argmax(along))])
        if segment.length == 0.0:
            continue
        support = _support(segment, pixels)
        if support < 2:
            continue
        candidates.append(SegmentCandidate(segment, SegmentSource.HOUGH, support))

    logger.debug("Hough: %d lines, %d segments", len(lines), len(candidates))
    return candidates
