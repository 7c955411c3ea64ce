"""
Point clustering and robust line fitting: DBSCAN, seeded k-means, RANSAC.
"""

import logging
from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometry
from .geom import NormalLine, Point, fit_line_tls, segment_to_normal, LineSegment

logger = logging.getLogger(__name__)

NOISE = -1
_UNVISITED = -2
_REFIT_ROUNDS = 3


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic child seed for a (seed, key...) path."""
    sequence = np.random.SeedSequence([int(seed), *[int(k) for k in keys]])
    return int(sequence.generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class ClusterLabeling:
    """Label per point; NOISE (-1) or a cluster id in [0, k)."""

    labels: np.ndarray
    k: int

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.labels == cluster)

    @property
    def noise(self) -> np.ndarray:
        return np.flatnonzero(self.labels == NOISE)

    def sizes(self) -> List[int]:
        return [int(np.count_nonzero(self.labels == c)) for c in range(self.k)]


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return pts.reshape(0, 2)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"Expected an (N, 2) point array, got shape {pts.shape}")
    return pts


def dbscan(points, eps: float, min_pts: int) -> ClusterLabeling:
    """
    Density clustering with closed eps-balls that include the point itself.

    Points are visited in index order, so clusters are numbered by their lowest
    core point and a border point joins the first cluster that reaches it.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError("eps must be > 0 and min_pts >= 1")
    pts = _as_points(points)
    n = len(pts)
    if n == 0:
        return ClusterLabeling(np.zeros(0, dtype=int), 0)

    neighbourhoods = [sorted(ids) for ids in cKDTree(pts).query_ball_point(pts, r=eps)]
    core = np.array([len(ids) >= min_pts for ids in neighbourhoods])
    labels = np.full(n, _UNVISITED, dtype=int)
    k = 0
    for i in range(n):
        if labels[i] != _UNVISITED:
            continue
        if not core[i]:
            labels[i] = NOISE
            continue
        labels[i] = k
        queue = deque(neighbourhoods[i])
        while queue:
            j = queue.popleft()
            if labels[j] == NOISE:
                labels[j] = k
                continue
            if labels[j] != _UNVISITED:
                continue
            labels[j] = k
            if core[j]:
                queue.extend(neighbourhoods[j])
        k += 1
    return ClusterLabeling(labels, k)


@dataclass(frozen=True, eq=False)
class KMeansResult:
    labeling: ClusterLabeling
    centroids: np.ndarray
    objective_history: List[float] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.objective_history)


def _plus_plus(pts: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(len(pts)))]
    for _ in range(1, k):
        d2 = np.min(((pts[:, None, :] - pts[chosen][None, :, :]) ** 2).sum(axis=2), axis=1)
        total = float(d2.sum())
        if total > 0.0:
            chosen.append(int(rng.choice(len(pts), p=d2 / total)))
        else:
            remaining = np.setdiff1d(np.arange(len(pts)), chosen)
            chosen.append(int(rng.choice(remaining)))
    return pts[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iterations: int = 100) -> KMeansResult:
    """
    Lloyd's algorithm from a seeded k-means++ start.

    Stops when assignments no longer change or after ``max_iterations``; an empty
    cluster keeps its previous centroid. ``objective_history`` holds the within-cluster
    sum of squares after each assignment step.
    """
    pts = _as_points(points)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(pts) < k:
        raise ValueError(f"k-means needs at least k={k} points, got {len(pts)}")

    rng = np.random.default_rng(seed)
    centroids = _plus_plus(pts, k, rng)
    labels = np.full(len(pts), -1, dtype=int)
    history: List[float] = []
    for _ in range(max_iterations):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(pts)), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
    return KMeansResult(ClusterLabeling(labels, k), centroids, history)


@dataclass(frozen=True, eq=False)
class FittedLine:
    model: NormalLine
    inliers: np.ndarray
    residual_threshold: float


def _hypothesis_pairs(n: int, iterations: int, rng: np.random.Generator):
    if n * (n - 1) // 2 <= iterations:
        yield from combinations(range(n), 2)
        return
    for _ in range(iterations):
        i, j = rng.choice(n, size=2, replace=False)
        yield int(i), int(j)


def ransac_line(points, inlier_tol: float, iterations: int, seed: int = 0) -> FittedLine:
    """
    RANSAC line in normal form followed by a total least squares refit on the inliers.

    Hypotheses maximise the inlier count, ties resolved by lower summed residual.
    Small inputs enumerate every pair instead of sampling.
    """
    pts = _as_points(points)
    if len(np.unique(pts, axis=0)) < 2:
        raise DegenerateGeometry("RANSAC needs at least two distinct points")

    rng = np.random.default_rng(seed)
    best: Optional[NormalLine] = None
    best_key = (-1, 0.0)
    for i, j in _hypothesis_pairs(len(pts), iterations, rng):
        if np.array_equal(pts[i], pts[j]):
            continue
        model = segment_to_normal(LineSegment(Point(*pts[i]), Point(*pts[j])))
        residuals = model.distance(pts)
        within = residuals <= inlier_tol
        key = (int(within.sum()), -float(residuals[within].sum()))
        if key > best_key:
            best, best_key = model, key
    if best is None:
        raise DegenerateGeometry("No valid RANSAC hypothesis")

    model = best
    inliers = np.flatnonzero(model.distance(pts) <= inlier_tol)
    for _ in range(_REFIT_ROUNDS):
        if len(np.unique(pts[inliers], axis=0)) < 2:
            break
        refit = fit_line_tls(pts[inliers])
        refit_inliers = np.flatnonzero(refit.distance(pts) <= inlier_tol)
        if len(refit_inliers) < 2:
            break
        model = refit
        if np.array_equal(refit_inliers, inliers):
            break
        inliers = refit_inliers
    inliers = np.flatnonzero(model.distance(pts) <= inlier_tol)
    return FittedLine(model, inliers, float(inlier_tol))
