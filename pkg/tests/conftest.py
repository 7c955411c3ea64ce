"""Shared fixtures for the planerefine test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

# Make the checkout importable without installation
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from planerefine.geom import Point, Polygon, rasterize  # noqa: E402
from planerefine.raster import RasterMask  # noqa: E402


@pytest.fixture
def write_png(tmp_path):
    """Write a uint8 array (H x W or H x W x 3) as PNG under tmp_path and return its path."""

    def _write(array, name="image.png"):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(np.asarray(array, dtype=np.uint8)).save(path, format="PNG")
        return path

    return _write


@pytest.fixture
def rhombus():
    """A slanted quadrilateral well inside a 200 x 160 frame."""
    return Polygon((Point(40.3, 50.2), Point(140.6, 30.4), Point(165.2, 120.7), Point(60.1, 135.5)))


@pytest.fixture
def rhombus_mask(rhombus):
    return RasterMask(rasterize(rhombus, 200, 160))


def square_mask(width, height, x0, y0, x1, y1):
    """Mask with columns x0..x1-1 and rows y0..y1-1 set."""
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1, x0:x1] = True
    return RasterMask(bits)
