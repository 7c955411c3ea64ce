"""
Per-mask refinement: group segment candidates into edge hypotheses, pick the
best endpoints per edge, close the edges into a polygon and gate the result
against the prior with an IoU fallback.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import cdist

from .cluster import dbscan, derive_seed, kmeans
from .config import RefineConfig
from .edges import harris_corners
from .errors import AssemblyError, DegenerateGeometry, EmptyMask, InsufficientEdges
from .geom import (
    LineSegment,
    NormalLine,
    Point,
    Polygon,
    convex_hull,
    distance_to_segment,
    fit_line_tls,
    intersect,
    point_angle,
    polygon_is_simple,
    rasterize,
    rasterize_segment,
    segment_to_normal,
    simplify,
)
from .linefit import (
    SegmentCandidate,
    extend_segment,
    extract_contour,
    remove_specks,
    segments_by_clustering,
    segments_by_hough,
)
from .raster import EdgeMap, RasterMask, check_same_size, dilate, mask_contour, mask_iou, pixel_points

logger = logging.getLogger(__name__)

_PIXEL_CORNERS = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])


@dataclass(frozen=True, eq=False)
class EdgeHypothesis:
    """One polygon edge: its member segments and the endpoint candidate sets of both sides."""

    members: Tuple[SegmentCandidate, ...]
    side_a: np.ndarray
    side_b: np.ndarray
    line: NormalLine

    @property
    def centroid_a(self) -> Point:
        return Point(*self.side_a.mean(axis=0))

    @property
    def centroid_b(self) -> Point:
        return Point(*self.side_b.mean(axis=0))


@dataclass(frozen=True)
class EdgeChoice:
    start: Point
    end: Point
    cost: float
    line: NormalLine

    @property
    def segment(self) -> LineSegment:
        return LineSegment(self.start, self.end)


@dataclass(frozen=True, eq=False)
class RefineReport:
    mask_id: str
    refined: Polygon
    refined_mask: RasterMask
    used_fallback: bool
    assembly_failed: bool
    prior_iou: float
    output_iou: float
    edges: Tuple[EdgeChoice, ...]
    seed: int


def _unwrap_angles(rhos: np.ndarray, thetas: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Re-express lines so that no group of nearby angles straddles the theta = 0/pi seam."""
    ordered = np.sort(thetas)
    gaps = np.diff(np.append(ordered, ordered[0] + math.pi))
    widest = int(np.argmax(gaps))
    cut = math.fmod(ordered[widest] + gaps[widest] / 2.0, math.pi)
    flip = thetas >= cut
    return np.where(flip, -rhos, rhos), np.where(flip, thetas - math.pi, thetas)


def _canonical(rho: float, theta: float) -> NormalLine:
    while theta < 0.0:
        theta, rho = theta + math.pi, -rho
    while theta >= math.pi:
        theta, rho = theta - math.pi, -rho
    return NormalLine(float(rho), float(theta))


def _sample_near(tree: Optional[cKDTree], pixels: np.ndarray, centre: np.ndarray, count: int,
                 radius: float, rng: np.random.Generator) -> np.ndarray:
    if tree is None:
        return np.zeros((0, 2))
    nearby = sorted(tree.query_ball_point(centre, r=radius))
    if not nearby:
        return np.zeros((0, 2))
    picked = rng.choice(nearby, size=min(count, len(nearby)), replace=False)
    return pixels[np.sort(picked)]


def cluster_edges(candidates: Sequence[SegmentCandidate], edges: EdgeMap, cfg: RefineConfig,
                  seed: Optional[int] = None) -> List[EdgeHypothesis]:
    """
    Group candidates describing the same edge and build the endpoint sets A and B.

    Candidates are clustered in (rho, theta * diagonal / pi); within a group the
    oriented endpoints are split into two sides with 2-means, and each side is
    topped up with edge pixels sampled around its centroid.
    """
    seed = cfg.seed if seed is None else seed
    if not candidates:
        return []

    lines = [c.line for c in candidates]
    rhos, thetas = _unwrap_angles(np.array([l.rho for l in lines]), np.array([l.theta for l in lines]))
    scale = math.hypot(edges.width, edges.height) / math.pi
    labeling = dbscan(np.column_stack((rhos, thetas * scale)), cfg.edge_cluster_eps, 1)

    pixels = edges.points()
    tree = cKDTree(pixels) if len(pixels) else None
    hypotheses: List[EdgeHypothesis] = []
    for label in range(labeling.k):
        index = labeling.members(label)
        members = [candidates[i] for i in index]
        reference = max(members, key=lambda m: m.support).segment.direction
        oriented = [m.segment if np.dot(m.segment.direction, reference) >= 0 else m.segment.reversed()
                    for m in members]
        ends = np.array([s.a for s in oriented] + [s.b for s in oriented], dtype=float)

        split = kmeans(ends, 2, seed=derive_seed(seed, label))
        first = 0 if split.centroids[0] @ reference <= split.centroids[1] @ reference else 1
        side_a = ends[split.labeling.labels == first]
        side_b = ends[split.labeling.labels != first]
        if len(side_a) == 0 or len(side_b) == 0:
            side_a, side_b = ends[:len(oriented)], ends[len(oriented):]

        rng = np.random.default_rng(derive_seed(seed, label, 1))
        side_a = np.vstack([side_a, _sample_near(tree, pixels, side_a.mean(axis=0), cfg.candidate_samples,
                                                 cfg.candidate_sample_radius, rng)])
        side_b = np.vstack([side_b, _sample_near(tree, pixels, side_b.mean(axis=0), cfg.candidate_samples,
                                                 cfg.candidate_sample_radius, rng)])

        weights = np.array([m.support for m in members], dtype=float)
        line = _canonical(float(np.average(rhos[index], weights=weights)),
                          float(np.average(thetas[index], weights=weights)))
        hypotheses.append(EdgeHypothesis(tuple(members), side_a, side_b, line))

    logger.debug("Edge clustering: %d candidates -> %d hypotheses", len(candidates), len(hypotheses))
    return hypotheses


def _bits(target: Union[RasterMask, EdgeMap, np.ndarray]) -> np.ndarray:
    return np.asarray(getattr(target, "bits", target), dtype=bool)


def _span(side_a: np.ndarray, side_b: np.ndarray) -> float:
    return float(cdist(np.asarray(side_a, dtype=float), np.asarray(side_b, dtype=float)).max())


def _cost(pa, pb, bits: np.ndarray, span: float) -> float:
    if pa[0] == pb[0] and pa[1] == pb[1]:
        return 0.0
    pixels = rasterize_segment(pa, pb)
    height, width = bits.shape
    xs, ys = pixels[:, 0], pixels[:, 1]
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    overlap = np.count_nonzero(bits[ys[inside], xs[inside]]) / len(pixels)
    length = min(1.0, math.hypot(pb[0] - pa[0], pb[1] - pa[1]) / span)
    return 0.5 * overlap + 0.5 * length


def edge_cost(pa, pb, m_e, side_a, side_b) -> float:
    """
    C = 0.5 * I + 0.5 * |pa pb| / max |a b| over a in A, b in B.

    I is the fraction of the 1-px line from pa to pb that lies on ``m_e``.
    """
    span = _span(side_a, side_b)
    if span <= 0.0:
        raise DegenerateGeometry("Endpoint sets have zero extent")
    return _cost(pa, pb, _bits(m_e), span)


def select_endpoints(hypothesis: EdgeHypothesis, m_e) -> EdgeChoice:
    """Exhaustive search over A x B for the maximum cost; ties prefer longer, then smaller points."""
    bits = _bits(m_e)
    span = _span(hypothesis.side_a, hypothesis.side_b)
    if span <= 0.0:
        raise DegenerateGeometry("Endpoint sets have zero extent")

    best_key = None
    best = None
    for pa in hypothesis.side_a:
        for pb in hypothesis.side_b:
            cost = _cost(pa, pb, bits, span)
            length = math.hypot(pb[0] - pa[0], pb[1] - pa[1])
            key = (-cost, -length, float(pa[0]), float(pa[1]), float(pb[0]), float(pb[1]))
            if best_key is None or key < best_key:
                best_key, best = key, (Point(float(pa[0]), float(pa[1])), Point(float(pb[0]), float(pb[1])), cost)

    start, end, cost = best
    line = segment_to_normal(LineSegment(start, end)) if start != end else hypothesis.line
    return EdgeChoice(start, end, cost, line)


def _angle_offset(angle: float, reference: float) -> float:
    return (angle - reference + math.pi) % (2.0 * math.pi) - math.pi


def assemble_mask(edges: Sequence[EdgeChoice], prior: RasterMask,
                  vicinity_radius: float = 40.0) -> Polygon:
    """
    Close the selected edges into a polygon.

    Edges are ordered by the angle of their midpoints around the prior's
    centroid. Consecutive edges meet at their lines' intersection when it lies
    within ``vicinity_radius`` of an endpoint of each; otherwise the gap is
    bridged by both dangling endpoints.
    """
    if prior.is_empty:
        raise EmptyMask("Cannot assemble against an empty prior")
    if len(edges) < 3:
        raise InsufficientEdges(f"Need at least 3 edges, got {len(edges)}")

    centre = Point(*prior.points().mean(axis=0))
    midpoints = np.array([e.segment.midpoint for e in edges])
    order = np.argsort(point_angle(centre, midpoints), kind="stable")

    ordered = []
    for i in order:
        edge = edges[int(i)]
        reference = float(point_angle(centre, [edge.segment.midpoint])[0])
        to_start = _angle_offset(float(point_angle(centre, [edge.start])[0]), reference)
        to_end = _angle_offset(float(point_angle(centre, [edge.end])[0]), reference)
        first, last = (edge.start, edge.end) if to_start <= to_end else (edge.end, edge.start)
        ordered.append((first, last, edge.line))

    vertices: List[Point] = []
    count = len(ordered)
    for i in range(count):
        first_i, last_i, line_i = ordered[i]
        first_j, last_j, line_j = ordered[(i + 1) % count]
        corner = intersect(line_i, line_j)
        if corner is not None and \
                min(corner.distance(first_i), corner.distance(last_i)) <= vicinity_radius and \
                min(corner.distance(first_j), corner.distance(last_j)) <= vicinity_radius:
            vertices.append(corner)
        else:
            vertices.extend([last_i, first_j])

    deduped = [v for k, v in enumerate(vertices) if v != vertices[k - 1]] if len(vertices) > 1 else vertices
    if len(deduped) < 3:
        raise AssemblyError(f"Assembled outline has only {len(deduped)} distinct vertices")
    polygon = Polygon(tuple(deduped))
    if not polygon_is_simple(polygon):
        raise AssemblyError("Assembled outline self-intersects")
    return polygon


def fallback_mask(prior: RasterMask, max_points: int = 20) -> Polygon:
    """Convex hull of the prior's boundary pixels (as unit squares), simplified to ``max_points``."""
    if prior.is_empty:
        raise EmptyMask("Cannot build a fallback from an empty prior")
    boundary = mask_contour(prior).points()
    outline = (boundary[:, None, :] + _PIXEL_CORNERS[None, :, :]).reshape(-1, 2)
    return simplify(convex_hull(outline), max_points)


def _edge_support(choice: EdgeChoice, near_edges: np.ndarray) -> Tuple[int, float]:
    pixels = rasterize_segment(choice.start, choice.end)
    height, width = near_edges.shape
    xs, ys = pixels[:, 0], pixels[:, 1]
    inside = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    hits = int(np.count_nonzero(near_edges[ys[inside], xs[inside]]))
    return hits, hits / len(pixels)


def _same_edge(first: EdgeChoice, second: EdgeChoice, max_angle: float, max_offset: float) -> bool:
    """Near-parallel lines with most of the shorter segment within ``max_offset`` of the longer."""
    gap = abs(first.line.theta - second.line.theta) % math.pi
    if min(gap, math.pi - gap) > max_angle:
        return False
    shorter, longer = sorted((first, second), key=lambda e: e.segment.length)
    pixels = rasterize_segment(shorter.start, shorter.end)
    return float(np.mean(distance_to_segment(pixels, longer.segment) <= max_offset)) >= 0.5


def select_edges(choices: Sequence[EdgeChoice], edges: EdgeMap, cfg: RefineConfig) -> List[EdgeChoice]:
    """
    The well-supported, mutually distinct edges, strongest first.

    A pixel of an edge's 1-px line is supported when an edge pixel lies within
    one pixel of it. Edges with fewer than ``min_edge_support`` supported pixels
    or a supported share below ``min_edge_overlap`` are dropped; of several
    edges on the same line only the best-supported one is kept.
    """
    near_edges = dilate(edges, 1).bits
    scored = []
    for choice in choices:
        hits, share = _edge_support(choice, near_edges)
        if hits >= cfg.min_edge_support and share >= cfg.min_edge_overlap:
            scored.append((hits, choice))
    scored.sort(key=lambda item: (-item[0], -item[1].cost, item[1].start, item[1].end))

    max_angle = math.radians(cfg.hough_theta_merge_deg)
    kept: List[EdgeChoice] = []
    for _, choice in scored:
        if not any(_same_edge(choice, other, max_angle, cfg.widen_radius) for other in kept):
            kept.append(choice)
    logger.debug("Edge selection: %d of %d edges kept", len(kept), len(choices))
    return kept


def _assemble_strongest(edges: Sequence[EdgeChoice], prior: RasterMask,
                        vicinity_radius: float) -> Tuple[Polygon, Tuple[EdgeChoice, ...]]:
    """Assemble the edges, dropping the weakest one after each failure while more than three remain."""
    used = list(edges)
    while True:
        try:
            return assemble_mask(used, prior, vicinity_radius), tuple(used)
        except AssemblyError:
            if len(used) <= 3:
                raise
            used.pop()


def needs_fallback(prior_iou: float, threshold: float) -> bool:
    """The gate: refined output is replaced when its IoU with the prior is strictly below threshold."""
    return prior_iou < threshold


def _cost_target(hypothesis: EdgeHypothesis, edge_pixels: np.ndarray, shape: Tuple[int, int],
                 prior: RasterMask, cfg: RefineConfig) -> np.ndarray:
    if cfg.cost_target == "prior":
        return prior.bits
    bits = np.zeros(shape, dtype=bool)
    if len(edge_pixels):
        near = edge_pixels[hypothesis.line.distance(edge_pixels) <= cfg.widen_radius].astype(int)
        bits[near[:, 1], near[:, 0]] = True
    return bits


def _settle_line(choice: EdgeChoice, edge_pixels: np.ndarray, tolerance: float) -> EdgeChoice:
    if len(edge_pixels) == 0:
        return choice
    near = edge_pixels[distance_to_segment(edge_pixels, choice.segment) <= tolerance]
    try:
        return replace(choice, line=fit_line_tls(near))
    except DegenerateGeometry:
        return choice


def refine_mask(prior: RasterMask, edges: EdgeMap, cfg: Optional[RefineConfig] = None,
                mask_id: str = "", seed: Optional[int] = None) -> RefineReport:
    """
    Refine one prior mask against an edge map.

    Only the well-supported, distinct edges are assembled; when assembly fails
    the weakest edge is dropped and assembly retried while more than three
    remain. Returns the assembled polygon unless assembly fails or its IoU with the
    prior is below ``cfg.fallback_iou``, in which case the prior's simplified
    convex hull is returned instead.
    """
    cfg = cfg or RefineConfig()
    check_same_size(edges, prior, "edge map")
    if prior.is_empty:
        raise EmptyMask(f"Prior mask '{mask_id}' is empty")
    seed = cfg.seed if seed is None else seed

    extract = remove_specks(extract_contour(edges, prior, cfg.widen_radius, mask_id), cfg.min_cluster_px)
    corners = harris_corners(extract.edge_map, cfg.harris_k, cfg.harris_window, cfg.harris_rel_threshold)
    clustered = segments_by_clustering(extract, corners, cfg, derive_seed(seed, 1))
    extended = [extend_segment(c, edges, cfg.extension_band_radius, cfg, derive_seed(seed, 2, i))
                for i, c in enumerate(clustered)]
    hough = segments_by_hough(extract, cfg)
    hypotheses = cluster_edges(extended + hough, edges, cfg, derive_seed(seed, 3))

    edge_pixels = pixel_points(edges.bits)
    shape = edges.bits.shape
    choices: List[EdgeChoice] = []
    for hypothesis in hypotheses:
        target = _cost_target(hypothesis, edge_pixels, shape, prior, cfg)
        try:
            choice = select_endpoints(hypothesis, target)
        except DegenerateGeometry:
            continue
        choices.append(_settle_line(choice, edge_pixels, cfg.ransac_tol))
    selected = tuple(select_edges(choices, edges, cfg))

    width, height = prior.size
    prior_iou = 0.0
    assembly_failed = False
    candidate: Optional[Tuple[Polygon, RasterMask]] = None
    try:
        polygon, selected = _assemble_strongest(selected, prior, cfg.vicinity_radius)
        candidate_mask = RasterMask(rasterize(polygon, width, height))
        prior_iou = mask_iou(candidate_mask, prior)
        candidate = (polygon, candidate_mask)
    except AssemblyError as exc:
        assembly_failed = True
        logger.info("Mask %s: assembly failed (%s)", mask_id or "?", exc)

    used_fallback = assembly_failed or needs_fallback(prior_iou, cfg.fallback_iou)
    if used_fallback:
        polygon = fallback_mask(prior, cfg.max_fallback_points)
        output = RasterMask(rasterize(polygon, width, height))
        logger.info("Mask %s: using fallback (IoU with prior %.3f)", mask_id or "?", prior_iou)
    else:
        polygon, output = candidate

    logger.debug("Mask %s: %d clustering + %d Hough segments, %d edges",
                 mask_id or "?", len(extended), len(hough), len(selected))
    return RefineReport(
        mask_id=mask_id,
        refined=polygon,
        refined_mask=output,
        used_fallback=used_fallback,
        assembly_failed=assembly_failed,
        prior_iou=prior_iou,
        output_iou=mask_iou(output, prior),
        edges=selected,
        seed=seed,
    )
