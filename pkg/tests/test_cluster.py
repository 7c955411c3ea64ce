from itertools import product

import numpy as np
import pytest

from planerefine.cluster import NOISE, dbscan, derive_seed, kmeans, ransac_line
from planerefine.errors import DegenerateGeometry


def dbscan_oracle(points, eps, min_pts):
    """Labels from an O(n^2) reachability closure, clusters numbered by their lowest core point."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    near = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1)) <= eps
    core = near.sum(axis=1) >= min_pts
    labels = np.full(n, NOISE)
    k = 0
    for start in range(n):
        if not core[start] or labels[start] != NOISE:
            continue
        component = {start}
        frontier = [start]
        while frontier:
            i = frontier.pop()
            for j in np.flatnonzero(near[i] & core):
                if j not in component:
                    component.add(int(j))
                    frontier.append(int(j))
        labels[sorted(component)] = k
        k += 1
    for i in np.flatnonzero(~core):
        reached = labels[near[i] & core]
        if len(reached):
            labels[i] = reached.min()
    return labels, k


class TestDbscan:
    def test_chain_is_one_cluster(self):
        labeling = dbscan([(0, 0), (0, 1), (0, 2)], eps=1.5, min_pts=2)
        assert labeling.k == 1
        assert labeling.labels.tolist() == [0, 0, 0]

    def test_isolated_point_is_noise(self):
        labeling = dbscan([(0, 0), (0, 1), (30, 30)], eps=1.5, min_pts=2)
        assert labeling.labels.tolist() == [0, 0, NOISE]
        assert labeling.noise.tolist() == [2]

    def test_empty_input(self):
        labeling = dbscan(np.zeros((0, 2)), eps=1.0, min_pts=2)
        assert labeling.k == 0 and len(labeling.labels) == 0

    def test_border_point_joins_first_cluster(self):
        # two dense groups sharing one border point at x = 5
        left = [(0, 0), (1, 0), (2, 0), (3, 0)]
        right = [(7, 0), (8, 0), (9, 0), (10, 0)]
        labeling = dbscan(left + [(5, 0)] + right, eps=2.1, min_pts=4)
        assert labeling.k == 2
        assert labeling.labels[4] == 0
        assert labeling.sizes() == [5, 4]

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_reachability_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 80))
        points = rng.uniform(0, 40, size=(n, 2))
        eps = float(rng.uniform(1.0, 6.0))
        min_pts = int(rng.integers(1, 6))
        expected, k = dbscan_oracle(points, eps, min_pts)
        labeling = dbscan(points, eps, min_pts)
        assert labeling.k == k
        assert labeling.labels.tolist() == expected.tolist()

    @pytest.mark.parametrize("seed", range(5))
    def test_permutation_keeps_core_partition(self, seed):
        rng = np.random.default_rng(seed)
        points = rng.uniform(0, 30, size=(60, 2))
        order = rng.permutation(60)
        base = dbscan(points, 3.0, 3)
        shuffled = dbscan(points[order], 3.0, 3)
        relabelled = np.empty(60, dtype=int)
        relabelled[order] = shuffled.labels
        assert set(base.noise.tolist()) == set(np.flatnonzero(relabelled == NOISE).tolist())
        assert base.k == shuffled.k
        near = np.hypot(*(points[:, None, :] - points[None, :, :]).transpose(2, 0, 1)) <= 3.0
        core = near.sum(axis=1) >= 3
        mapping = {}
        for a, b in zip(base.labels[core], relabelled[core]):
            assert mapping.setdefault(a, b) == b
        assert len(set(mapping.values())) == len(mapping)


class TestKmeans:
    def test_two_blobs(self):
        rng = np.random.default_rng(4)
        blob_a = rng.normal((10, 10), 0.5, size=(5, 2))
        blob_b = rng.normal((60, 40), 0.5, size=(5, 2))
        result = kmeans(np.vstack((blob_a, blob_b)), 2, seed=11)
        labels = result.labeling.labels
        assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1
        assert labels[0] != labels[5]

        # no other two-way split of the ten points does better
        points = np.vstack((blob_a, blob_b))
        best = result.objective_history[-1]
        for assignment in product((0, 1), repeat=10):
            assignment = np.array(assignment)
            if assignment.min() == assignment.max():
                continue
            cost = sum(((points[assignment == c] - points[assignment == c].mean(axis=0)) ** 2).sum()
                       for c in (0, 1))
            assert cost >= best - 1e-9

    def test_single_cluster_is_mean(self):
        points = np.array([(0, 0), (4, 0), (2, 6)], dtype=float)
        result = kmeans(points, 1)
        assert result.centroids[0] == pytest.approx(points.mean(axis=0))

    def test_one_cluster_per_point(self):
        points = np.array([(0, 0), (5, 1), (9, 9), (2, 7)], dtype=float)
        result = kmeans(points, 4, seed=3)
        assert sorted(result.labeling.labels.tolist()) == [0, 1, 2, 3]
        assert result.objective_history[-1] == pytest.approx(0.0)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            kmeans([(0, 0)], 2)

    @pytest.mark.parametrize("seed", range(30))
    def test_objective_never_increases(self, seed):
        rng = np.random.default_rng(seed)
        points = rng.uniform(0, 100, size=(int(rng.integers(5, 80)), 2))
        result = kmeans(points, int(rng.integers(1, 5)), seed=seed)
        assert np.all(np.diff(result.objective_history) <= 1e-9)
        assert result.iterations <= 100

    def test_reproducible(self):
        points = np.random.default_rng(9).uniform(0, 50, size=(40, 2))
        first, second = kmeans(points, 3, seed=5), kmeans(points, 3, seed=5)
        assert np.array_equal(first.labeling.labels, second.labeling.labels)
        assert np.array_equal(first.centroids, second.centroids)


class TestRansac:
    def test_collinear_points_fit_exactly(self):
        points = [(2 + 3 * t, 1 + 0.5 * t) for t in range(10)]
        fit = ransac_line(points, 2.0, 200, seed=1)
        assert np.all(fit.model.distance(points) < 1e-9)
        assert fit.inliers.tolist() == list(range(10))

    def test_outlier_excluded(self):
        points = [(t, 2.0 * t + 3.0) for t in range(20)]
        line_normal = np.array([2.0, -1.0]) / np.sqrt(5.0)
        outlier = np.array(points[10]) + 50.0 * line_normal
        fit = ransac_line(points + [tuple(outlier)], 2.0, 200, seed=7)
        assert 20 not in fit.inliers.tolist()
        assert len(fit.inliers) == 20

    def test_vertical_column(self):
        fit = ransac_line([(7.0, float(y)) for y in range(15)], 2.0, 200)
        assert fit.model.theta == pytest.approx(0.0, abs=1e-9)
        assert fit.model.rho == pytest.approx(7.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_inliers_within_tolerance(self, seed):
        rng = np.random.default_rng(seed)
        t = rng.uniform(0, 80, 40)
        points = np.column_stack((t, 0.3 * t + rng.normal(0, 0.6, 40)))
        points = np.vstack((points, rng.uniform(0, 80, size=(10, 2))))
        fit = ransac_line(points, 2.0, 200, seed=seed)
        assert np.all(fit.model.distance(points[fit.inliers]) <= 2.0)
        assert len(fit.inliers) >= 35

    def test_needs_two_distinct_points(self):
        with pytest.raises(DegenerateGeometry):
            ransac_line([(1, 1), (1, 1), (1, 1)], 2.0, 10)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({derive_seed(0, i) for i in range(50)}) == 50
    assert derive_seed(0, 1, 2) != derive_seed(0, 2, 1)
