"""
Planar geometry on image coordinates (x = column, y = row).
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateGeometry

PARALLEL_EPS = 1e-6


class Point(NamedTuple):
    x: float
    y: float

    def distance(self, other: "Point") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


class LineSegment(NamedTuple):
    a: Point
    b: Point

    @property
    def length(self) -> float:
        return self.a.distance(self.b)

    @property
    def midpoint(self) -> Point:
        return Point((self.a.x + self.b.x) / 2.0, (self.a.y + self.b.y) / 2.0)

    @property
    def direction(self) -> np.ndarray:
        """Unit vector from a to b (zero for a degenerate segment)."""
        d = np.array([self.b.x - self.a.x, self.b.y - self.a.y], dtype=float)
        norm = np.hypot(*d)
        return d / norm if norm > 0 else d

    def reversed(self) -> "LineSegment":
        return LineSegment(self.b, self.a)


class NormalLine(NamedTuple):
    """Line x*cos(theta) + y*sin(theta) = rho with theta in [0, pi)."""

    rho: float
    theta: float

    @property
    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])

    @property
    def direction(self) -> np.ndarray:
        return np.array([-math.sin(self.theta), math.cos(self.theta)])

    def signed_distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.normal - self.rho

    def distance(self, points) -> np.ndarray:
        return np.abs(self.signed_distance(points))

    def project(self, points) -> np.ndarray:
        """Coordinate of each point along the line direction."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts @ self.direction

    def point_at(self, t: float) -> Point:
        base = self.rho * self.normal + t * self.direction
        return Point(float(base[0]), float(base[1]))

    def foot(self, point) -> Point:
        """Orthogonal projection of a point onto the line."""
        return self.point_at(float(self.project(point)[0]))

    @classmethod
    def through(cls, point, normal) -> "NormalLine":
        """Line through ``point`` with the given normal vector, canonicalised."""
        nx, ny = float(normal[0]), float(normal[1])
        norm = math.hypot(nx, ny)
        if norm == 0.0:
            raise DegenerateGeometry("Zero normal vector")
        nx, ny = nx / norm, ny / norm
        theta = math.atan2(ny, nx)
        if theta < 0.0:
            theta += math.pi
            nx, ny = -nx, -ny
        if theta >= math.pi:
            theta -= math.pi
            nx, ny = -nx, -ny
        return cls(float(point[0]) * nx + float(point[1]) * ny, theta)


@dataclass(frozen=True)
class Polygon:
    """Closed polygon, at least three vertices, implicitly closed."""

    vertices: Tuple[Point, ...]

    def __post_init__(self):
        vertices = tuple(Point(float(x), float(y)) for x, y in self.vertices)
        if len(vertices) < 3:
            raise DegenerateGeometry(f"A polygon needs at least 3 vertices, got {len(vertices)}")
        object.__setattr__(self, "vertices", vertices)

    def __len__(self) -> int:
        return len(self.vertices)

    def as_array(self) -> np.ndarray:
        return np.array(self.vertices, dtype=float)

    @property
    def area(self) -> float:
        """Signed shoelace area."""
        pts = self.as_array()
        x, y = pts[:, 0], pts[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def edges(self) -> List[LineSegment]:
        n = len(self.vertices)
        return [LineSegment(self.vertices[i], self.vertices[(i + 1) % n]) for i in range(n)]

    def to_dict(self) -> Dict[str, List[List[float]]]:
        return {"vertices": [[v.x, v.y] for v in self.vertices]}

    @classmethod
    def from_dict(cls, data: Dict) -> "Polygon":
        return cls(tuple(Point(float(x), float(y)) for x, y in data["vertices"]))


def segment_to_normal(segment: LineSegment) -> NormalLine:
    """Normal form of the infinite line through a segment."""
    d = np.array([segment.b.x - segment.a.x, segment.b.y - segment.a.y], dtype=float)
    if not np.any(d):
        raise DegenerateGeometry("Segment endpoints coincide")
    return NormalLine.through(segment.a, (-d[1], d[0]))


def intersect(first: NormalLine, second: NormalLine) -> Optional[Point]:
    """Intersection point, or None when the lines are parallel within 1e-6."""
    c1, s1 = math.cos(first.theta), math.sin(first.theta)
    c2, s2 = math.cos(second.theta), math.sin(second.theta)
    det = c1 * s2 - s1 * c2
    if abs(det) < PARALLEL_EPS:
        return None
    x = (first.rho * s2 - s1 * second.rho) / det
    y = (c1 * second.rho - first.rho * c2) / det
    return Point(x, y)


def fit_line_tls(points) -> NormalLine:
    """Total least squares line: through the centroid, normal = least principal axis."""
    pts = np.asarray(points, dtype=float)
    if len(np.unique(pts, axis=0)) < 2:
        raise DegenerateGeometry("At least two distinct points are needed to fit a line")
    centroid = pts.mean(axis=0)
    _, vectors = np.linalg.eigh(np.cov((pts - centroid).T, bias=True))
    return NormalLine.through(centroid, vectors[:, 0])


def principal_axes(points) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (descending) and eigenvectors (columns) of the point covariance."""
    pts = np.asarray(points, dtype=float)
    values, vectors = np.linalg.eigh(np.cov((pts - pts.mean(axis=0)).T, bias=True))
    return values[::-1], vectors[:, ::-1]


def distance_to_segment(points, segment: LineSegment) -> np.ndarray:
    """Euclidean distance from each point to the closed segment."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = np.array(segment.a, dtype=float)
    d = np.array(segment.b, dtype=float) - a
    length_sq = float(d @ d)
    if length_sq == 0.0:
        return np.hypot(*(pts - a).T)
    t = np.clip((pts - a) @ d / length_sq, 0.0, 1.0)
    closest = a + t[:, None] * d
    return np.hypot(*(pts - closest).T)


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points: Iterable) -> Polygon:
    """
    Convex hull by monotone chain, counter-clockwise (positive shoelace area).

    Points lying on a hull edge are not vertices.
    """
    unique = sorted(set((float(x), float(y)) for x, y in points))
    if len(unique) < 3:
        raise DegenerateGeometry(f"Convex hull needs 3 distinct points, got {len(unique)}")

    def chain(sequence):
        out: List[Tuple[float, float]] = []
        for p in sequence:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(unique)
    upper = chain(reversed(unique))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateGeometry("All points are collinear")
    return Polygon(tuple(Point(x, y) for x, y in hull))


def _douglas_peucker(pts: np.ndarray, epsilon: float) -> List[int]:
    """Indices kept by Douglas-Peucker on an open chain (endpoints always kept)."""
    keep = [0, len(pts) - 1]
    stack = [(0, len(pts) - 1)]
    while stack:
        start, end = stack.pop()
        if end - start < 2:
            continue
        inner = pts[start + 1:end]
        distances = distance_to_segment(inner, LineSegment(Point(*pts[start]), Point(*pts[end])))
        offset = int(np.argmax(distances))
        if distances[offset] > epsilon:
            split = start + 1 + offset
            keep.append(split)
            stack.append((start, split))
            stack.append((split, end))
    return sorted(set(keep))


def _simplify_closed(pts: np.ndarray, epsilon: float) -> List[int]:
    n = len(pts)
    first = int(np.argmax(np.hypot(*(pts - pts.mean(axis=0)).T)))
    second = int(np.argmax(np.hypot(*(pts - pts[first]).T)))
    order = np.roll(np.arange(n), -first)
    split = int((second - first) % n)
    forward = order[:split + 1]
    backward = np.append(order[split:], order[0])
    kept = [forward[i] for i in _douglas_peucker(pts[forward], epsilon)]
    kept += [backward[i] for i in _douglas_peucker(pts[backward], epsilon)[1:-1]]
    kept = sorted(set(int(i) for i in kept), key=lambda i: (i - first) % n)
    if len(kept) < 3:
        chord = LineSegment(Point(*pts[first]), Point(*pts[second]))
        distances = distance_to_segment(pts, chord)
        distances[kept] = -1.0
        kept = sorted(set(kept) | {int(np.argmax(distances))}, key=lambda i: (i - first) % n)
    return kept


def simplify(polygon: Polygon, max_points: int) -> Polygon:
    """
    Douglas-Peucker with tolerance 0.5 px, doubled until at most ``max_points`` vertices remain.

    Output vertices are a subsequence of the input's, cyclic order preserved.
    """
    if max_points < 3:
        raise ValueError(f"max_points must be >= 3, got {max_points}")
    pts = polygon.as_array()
    if len(pts) <= max_points:
        return polygon
    epsilon = 0.5
    while True:
        kept = sorted(_simplify_closed(pts, epsilon))
        if len(kept) <= max_points:
            return Polygon(tuple(polygon.vertices[i] for i in kept))
        epsilon *= 2.0


def rasterize(polygon: Polygon, width: int, height: int) -> np.ndarray:
    """
    Even-odd fill at pixel centres.

    A centre exactly on a crossing is inside when the crossing is its left
    bound (half-open spans), and rows use half-open edge extents.
    """
    if width <= 0 or height <= 0:
        raise ValueError(f"Raster size must be positive, got {width}x{height}")
    pts = polygon.as_array()
    x0, y0 = pts[:, 0], pts[:, 1]
    x1, y1 = np.roll(x0, -1), np.roll(y0, -1)
    out = np.zeros((height, width), dtype=bool)
    top = max(0, int(math.ceil(float(pts[:, 1].min()))))
    bottom = min(height - 1, int(math.floor(float(pts[:, 1].max()))))
    for row in range(top, bottom + 1):
        crosses = ((y0 <= row) & (row < y1)) | ((y1 <= row) & (row < y0))
        if not crosses.any():
            continue
        t = (row - y0[crosses]) / (y1[crosses] - y0[crosses])
        xs = np.sort(x0[crosses] + t * (x1[crosses] - x0[crosses]))
        for left, right in zip(xs[0::2], xs[1::2]):
            start = max(0, int(math.ceil(left)))
            stop = min(width, int(math.ceil(right)))
            if start < stop:
                out[row, start:stop] = True
    return out


def rasterize_segment(a, b) -> np.ndarray:
    """Integer (x, y) pixels of the 1-px digital line from a to b, in order, without repeats."""
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    steps = int(math.ceil(max(abs(bx - ax), abs(by - ay))))
    t = np.linspace(0.0, 1.0, steps + 1)
    pixels = np.column_stack((np.rint(ax + t * (bx - ax)), np.rint(ay + t * (by - ay)))).astype(int)
    if len(pixels) > 1:
        fresh = np.any(np.diff(pixels, axis=0) != 0, axis=1)
        pixels = pixels[np.concatenate(([True], fresh))]
    return pixels


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _cross(q1, q2, p1)
    d2 = _cross(q1, q2, p2)
    d3 = _cross(p1, p2, q1)
    d4 = _cross(p1, p2, q2)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_segment(p, q, r) -> bool:
        return (min(p[0], q[0]) <= r[0] <= max(p[0], q[0])
                and min(p[1], q[1]) <= r[1] <= max(p[1], q[1]))

    return ((d1 == 0 and on_segment(q1, q2, p1)) or (d2 == 0 and on_segment(q1, q2, p2))
            or (d3 == 0 and on_segment(p1, p2, q1)) or (d4 == 0 and on_segment(p1, p2, q2)))


def polygon_is_simple(polygon: Polygon) -> bool:
    """True when no two non-adjacent edges touch and no vertex repeats."""
    vertices = polygon.vertices
    n = len(vertices)
    if len(set(vertices)) != n or abs(polygon.area) == 0.0:
        return False
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if _segments_cross(vertices[i], vertices[(i + 1) % n], vertices[j], vertices[(j + 1) % n]):
                return False
    return True


def point_angle(center: Point, points: Sequence) -> np.ndarray:
    """Polar angle of each point around ``center``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return np.arctan2(pts[:, 1] - center.y, pts[:, 0] - center.x)
