import numpy as np
import pytest

from conftest import square_mask
from planerefine.errors import DimensionMismatch, EmptyMask, ImageNotFound, MalformedImage
from planerefine.raster import (
    EdgeMap,
    GrayImage,
    RasterMask,
    dilate,
    erode,
    load_edge_map,
    load_gray,
    load_mask,
    mask_contour,
    mask_iou,
    pixel_points,
    read_size,
    resize_bilinear,
    save_bits,
)


class TestLoadGray:
    def test_white_pixel(self, write_png):
        image = load_gray(write_png(np.full((1, 1, 3), 255)))
        assert image.size == (1, 1)
        assert image.data.tolist() == [[255]]

    def test_red_pixel_uses_luma(self, write_png):
        image = load_gray(write_png(np.array([[[255, 0, 0]]])))
        assert image.data.tolist() == [[76]]

    def test_gray_file_keeps_values(self, write_png):
        values = np.arange(12, dtype=np.uint8).reshape(3, 4) * 20
        image = load_gray(write_png(values))
        assert image.size == (4, 3)
        assert np.array_equal(image.data, values)

    def test_truncated_file(self, write_png):
        path = write_png(np.random.default_rng(0).integers(0, 255, (64, 64)))
        path.write_bytes(path.read_bytes()[:60])
        with pytest.raises(MalformedImage):
            load_gray(path)

    def test_not_an_image(self, tmp_path):
        path = tmp_path / "notes.png"
        path.write_text("hello")
        with pytest.raises(MalformedImage):
            load_gray(path)

    def test_missing_file_names_path(self, tmp_path):
        missing = tmp_path / "absent.png"
        with pytest.raises(ImageNotFound) as info:
            load_gray(missing)
        assert str(missing) in str(info.value)
        assert isinstance(info.value, FileNotFoundError)

    def test_read_size_from_header(self, write_png):
        assert read_size(write_png(np.zeros((7, 11)))) == (11, 7)


def test_mask_threshold_at_128(write_png):
    mask = load_mask(write_png(np.array([[0, 127, 128, 255]])))
    assert mask.bits.tolist() == [[False, False, True, True]]


def test_edge_map_threshold_is_configurable(write_png):
    path = write_png(np.array([[0, 60, 127, 200]]))
    assert load_edge_map(path).bits.tolist() == [[False, False, False, True]]
    assert load_edge_map(path, threshold=60).bits.tolist() == [[False, True, True, True]]
    assert isinstance(load_edge_map(path), EdgeMap)


def test_save_bits_writes_0_and_255(tmp_path):
    edges = EdgeMap(np.eye(4, dtype=bool))
    path = tmp_path / "edges.png"
    save_bits(edges, path)
    assert sorted(np.unique(load_gray(path).data).tolist()) == [0, 255]
    assert load_mask(path).bits.tolist() == edges.bits.tolist()


def test_rasters_are_read_only_copies():
    source = np.zeros((3, 3), dtype=bool)
    mask = RasterMask(source)
    source[1, 1] = True
    assert mask.is_empty
    with pytest.raises(ValueError):
        mask.bits[0, 0] = True


def test_empty_array_rejected():
    with pytest.raises(MalformedImage):
        GrayImage(np.zeros((0, 4)))


def test_pixel_points_are_x_y_in_row_major_order():
    bits = np.zeros((3, 4), dtype=bool)
    bits[0, 3] = bits[2, 1] = True
    assert pixel_points(bits).tolist() == [[3.0, 0.0], [1.0, 2.0]]


class TestMaskContour:
    def test_full_3x3(self):
        contour = mask_contour(RasterMask(np.ones((3, 3), dtype=bool)))
        assert contour.count == 8
        assert not contour.bits[1, 1]

    def test_single_pixel(self):
        bits = np.zeros((3, 3), dtype=bool)
        bits[1, 1] = True
        assert mask_contour(RasterMask(bits)).bits.tolist() == bits.tolist()

    def test_centered_square(self):
        contour = mask_contour(square_mask(5, 5, 1, 1, 4, 4))
        expected = np.zeros((5, 5), dtype=bool)
        expected[1:4, 1:4] = True
        expected[2, 2] = False
        assert contour.bits.tolist() == expected.tolist()

    def test_contour_is_subset_and_peels(self):
        mask = square_mask(12, 10, 2, 1, 10, 9)
        contour = mask_contour(mask)
        assert not np.any(contour.bits & ~mask.bits)
        inner = RasterMask(mask.bits & ~contour.bits)
        assert mask_contour(inner) == EdgeMap(square_mask(12, 10, 3, 2, 9, 8).bits & ~square_mask(12, 10, 4, 3, 8, 7).bits)

    def test_empty_mask(self):
        with pytest.raises(EmptyMask):
            mask_contour(RasterMask(np.zeros((4, 4), dtype=bool)))


class TestDilate:
    def test_radius_zero_is_identity(self):
        edges = EdgeMap(np.random.default_rng(3).random((8, 9)) > 0.7)
        assert dilate(edges, 0) == edges

    def test_single_pixel_grows_to_block(self):
        bits = np.zeros((5, 5), dtype=bool)
        bits[2, 2] = True
        grown = dilate(EdgeMap(bits), 1)
        assert grown.count == 9
        assert grown.bits[1:4, 1:4].all()

    def test_far_pixels_give_disjoint_blocks(self):
        bits = np.zeros((5, 9), dtype=bool)
        bits[2, 2] = bits[2, 5] = True
        grown = dilate(EdgeMap(bits), 1)
        assert grown.count == 18
        assert grown.bits[1:4, 1:4].all() and grown.bits[1:4, 4:7].all()

    @pytest.mark.parametrize("seed", range(5))
    def test_monotone_and_composable(self, seed):
        edges = EdgeMap(np.random.default_rng(seed).random((20, 24)) > 0.93)
        once = dilate(edges, 3)
        assert not np.any(edges.bits & ~once.bits)
        assert dilate(dilate(edges, 1), 2) == once

    def test_keeps_type(self):
        assert isinstance(dilate(RasterMask(np.eye(3, dtype=bool)), 1), RasterMask)

    def test_negative_radius(self):
        with pytest.raises(ValueError):
            dilate(EdgeMap(np.eye(3, dtype=bool)), -1)


def test_erode_treats_outside_as_unset():
    eroded = erode(RasterMask(np.ones((5, 5), dtype=bool)), 1)
    assert eroded == square_mask(5, 5, 1, 1, 4, 4)


class TestMaskIou:
    def test_identical(self):
        mask = square_mask(6, 6, 1, 1, 4, 4)
        assert mask_iou(mask, mask) == 1.0

    def test_disjoint(self):
        assert mask_iou(square_mask(6, 6, 0, 0, 2, 2), square_mask(6, 6, 3, 3, 5, 5)) == 0.0

    def test_overlapping_squares(self):
        a = square_mask(5, 5, 0, 0, 2, 2)
        b = square_mask(5, 5, 1, 0, 3, 2)
        assert mask_iou(a, b) == pytest.approx(2 / 6)
        assert mask_iou(b, a) == mask_iou(a, b)

    def test_both_empty(self):
        empty = RasterMask(np.zeros((3, 3), dtype=bool))
        assert mask_iou(empty, empty) == 1.0

    def test_size_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mask_iou(square_mask(4, 4, 0, 0, 2, 2), square_mask(5, 4, 0, 0, 2, 2))


def test_resize_bilinear_shape_and_constant():
    values = np.full((48, 64), 7.0)
    resized = resize_bilinear(values, (32, 24))
    assert resized.shape == (24, 32)
    assert np.allclose(resized, 7.0)
