from fractions import Fraction

import numpy as np
import pytest

from planerefine.edges import (
    adaptive_canny,
    detect_edges,
    harris_corners,
    ingest_edge_map,
    non_max_suppression,
    otsu_threshold,
    sobel,
)
from planerefine.errors import DegenerateHistogram, ImageTooSmall
from planerefine.geom import distance_to_segment
from planerefine.raster import EdgeMap, GrayImage


def otsu_sweep(histogram):
    """Smallest level with the largest w0 * w1 * (mu0 - mu1)^2, in exact arithmetic."""
    counts = [int(c) for c in histogram]
    total = sum(counts)
    best_level, best_score = None, None
    for t in range(len(counts)):
        n0 = sum(counts[:t + 1])
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum(i * c for i, c in enumerate(counts[:t + 1])), n0)
        mu1 = Fraction(sum(i * c for i, c in enumerate(counts[t + 1:], start=t + 1)), n1)
        score = Fraction(n0 * n1, total * total) * (mu0 - mu1) ** 2
        if best_score is None or score > best_score:
            best_level, best_score = t, score
    return best_level


def step_image(width=20, height=20, column=10):
    values = np.zeros((height, width), dtype=np.uint8)
    values[:, column:] = 255
    return GrayImage(values)


class TestSobel:
    def test_constant_image(self):
        field = sobel(GrayImage(np.full((6, 7), 90)))
        assert not field.gx.any() and not field.gy.any()
        assert not field.magnitude.any()

    def test_vertical_step(self):
        field = sobel(step_image(8, 6, 4))
        assert not field.gy.any()
        strongest = set(np.argmax(field.gx, axis=1).tolist())
        assert strongest <= {3, 4}
        assert np.allclose(field.magnitude, np.hypot(field.gx, field.gy))

    def test_transpose_swaps_components(self):
        values = np.random.default_rng(1).integers(0, 256, (9, 7)).astype(np.uint8)
        field = sobel(GrayImage(values))
        swapped = sobel(GrayImage(values.T))
        assert np.array_equal(swapped.gx, field.gy.T)
        assert np.array_equal(swapped.gy, field.gx.T)

    def test_direction_range(self):
        field = sobel(GrayImage(np.random.default_rng(2).integers(0, 256, (10, 10))))
        assert np.all(field.direction > -np.pi) and np.all(field.direction <= np.pi)

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            sobel(GrayImage(np.zeros((2, 5))))


class TestOtsu:
    def test_two_levels(self):
        histogram = np.zeros(256, dtype=int)
        histogram[10] = histogram[200] = 100
        assert otsu_threshold(histogram) == otsu_sweep(histogram) == 10

    def test_single_level(self):
        histogram = np.zeros(256, dtype=int)
        histogram[42] = 500
        with pytest.raises(DegenerateHistogram):
            otsu_threshold(histogram)

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_exhaustive_sweep(self, seed):
        rng = np.random.default_rng(seed)
        length = int(rng.integers(2, 257))
        histogram = rng.integers(0, 50, length) * (rng.random(length) < rng.uniform(0.1, 1.0))
        if np.count_nonzero(histogram) < 2:
            histogram[0], histogram[-1] = 1, 1
        assert otsu_threshold(histogram) == otsu_sweep(histogram)


class TestAdaptiveCanny:
    def test_constant_image_has_no_edges(self):
        assert adaptive_canny(GrayImage(np.full((12, 12), 128))).is_empty

    def test_step_edge_localised(self):
        edges = adaptive_canny(step_image())
        for row in edges.bits:
            assert np.flatnonzero(row).tolist() in ([9], [10])

    def test_rhombus_contour(self, rhombus, rhombus_mask):
        image = GrayImage(np.where(rhombus_mask.bits, 255, 0))
        edges = adaptive_canny(image)
        pixels = edges.points()
        assert len(pixels) > 0
        distance = np.min([distance_to_segment(pixels, side) for side in rhombus.edges()], axis=0)
        assert np.mean(distance <= 2.0) >= 0.95

        # every part of the outline is detected
        samples = []
        for side in rhombus.edges():
            for t in np.linspace(0.1, 0.9, 20):
                samples.append((side.a.x + t * (side.b.x - side.a.x), side.a.y + t * (side.b.y - side.a.y)))
        gaps = [np.min(np.hypot(*(pixels - s).T)) for s in samples]
        assert max(gaps) <= 2.0

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            adaptive_canny(GrayImage(np.zeros((3, 2))))


def test_detect_edges_low_resolution_keeps_input_size():
    edges = detect_edges(step_image(80, 60, 40), low_resolution=(40, 30))
    assert edges.size == (80, 60)
    columns = set(np.nonzero(edges.bits)[1].tolist())
    assert columns and columns <= set(range(37, 43))
    assert edges.bits.any(axis=1).all()


def test_detect_edges_full_resolution_matches_canny():
    image = step_image(30, 20, 12)
    assert detect_edges(image) == adaptive_canny(image)


class TestIngest:
    def test_diagonal(self, write_png):
        edges = ingest_edge_map(write_png(np.array([[200, 100], [100, 200]])), threshold=128)
        assert edges.bits.tolist() == [[True, False], [False, True]]

    def test_all_white_and_all_black(self, write_png):
        assert ingest_edge_map(write_png(np.full((4, 5), 255), "white.png")).count == 20
        assert ingest_edge_map(write_png(np.zeros((4, 5)), "black.png")).is_empty

    def test_resize(self, write_png):
        edges = ingest_edge_map(write_png(np.full((3, 4), 255)), resize_to=(8, 6))
        assert edges.size == (8, 6)
        assert edges.bits.all()


class TestHarris:
    def test_full_width_line_has_no_corners(self):
        bits = np.zeros((40, 40), dtype=bool)
        bits[20, :] = True
        assert len(harris_corners(EdgeMap(bits))) == 0

    def test_empty_map(self):
        assert len(harris_corners(EdgeMap(np.zeros((10, 10), dtype=bool)))) == 0

    @staticmethod
    def l_shape():
        bits = np.zeros((40, 40), dtype=bool)
        bits[20, 20:] = True
        bits[20:, 20] = True
        return bits

    def test_l_shape_corner(self):
        corners = harris_corners(EdgeMap(self.l_shape()), k=0.04, window=5, rel_threshold=0.1)
        distances = np.hypot(*(corners.points - [20, 20]).T)
        assert len(corners) >= 1
        assert distances[0] <= 2.0
        assert np.all(distances <= 5.0)

    def test_rotation_consistent(self):
        bits = self.l_shape()
        original = harris_corners(EdgeMap(bits)).points
        rotated = harris_corners(EdgeMap(np.rot90(bits))).points
        assert len(original) == len(rotated) >= 1
        # np.rot90 maps (x, y) to (y, width - 1 - x)
        x, y = original[0]
        expected = np.array([y, bits.shape[1] - 1 - x])
        assert np.hypot(*(rotated[0] - expected)) <= 2.0

    def test_responses_pass_threshold(self):
        corners = harris_corners(EdgeMap(self.l_shape()), rel_threshold=0.1)
        assert np.all(corners.responses > 0)

    @pytest.mark.parametrize("k", [0.01, 0.25])
    def test_rejects_k_out_of_range(self, k):
        with pytest.raises(ValueError, match="k must be"):
            harris_corners(EdgeMap(self.l_shape()), k=k)

    @pytest.mark.parametrize("window", [1, 4, 6])
    def test_rejects_bad_window(self, window):
        with pytest.raises(ValueError, match="window must be odd"):
            harris_corners(EdgeMap(self.l_shape()), window=window)

    def test_parameters_checked_on_empty_map(self):
        with pytest.raises(ValueError):
            harris_corners(EdgeMap(np.zeros((10, 10), dtype=bool)), window=2)


# following neighbour for each quantised gradient direction (0, 45, 90, 135 degrees)
DIRECTION_STEPS = {0: (1, 0), 1: (1, 1), 2: (0, 1), 3: (-1, 1)}


def stacked_along_gradient(kept, field):
    """Kept pixels with a kept neighbour of the same quantised direction along that direction."""
    angle = np.degrees(np.mod(field.direction, np.pi))
    bins = np.floor((angle + 22.5) / 45.0).astype(int) % 4
    height, width = kept.shape
    stacked = []
    for y, x in zip(*np.nonzero(kept)):
        dx, dy = DIRECTION_STEPS[int(bins[y, x])]
        for nx, ny in ((x + dx, y + dy), (x - dx, y - dy)):
            if 0 <= nx < width and 0 <= ny < height and kept[ny, nx] and bins[ny, nx] == bins[y, x]:
                stacked.append((int(x), int(y)))
    return stacked


class TestNonMaxSuppression:
    def test_rhombus_ridge_is_one_pixel_thick(self, rhombus_mask):
        field = sobel(GrayImage(np.where(rhombus_mask.bits, 255, 0)))
        kept = non_max_suppression(field) > 0
        assert kept.any()
        assert stacked_along_gradient(kept, field) == []

    @pytest.mark.parametrize("seed", range(10))
    def test_random_images_are_thin(self, seed):
        rng = np.random.default_rng(seed)
        field = sobel(GrayImage(rng.integers(0, 256, size=(30, 40))))
        kept = non_max_suppression(field) > 0
        assert stacked_along_gradient(kept, field) == []

    def test_step_keeps_one_column(self):
        kept = non_max_suppression(sobel(step_image())) > 0
        for row in kept:
            assert len(np.flatnonzero(row)) == 1
