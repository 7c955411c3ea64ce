"""
Raster primitives: grayscale images, binary masks and edge maps.

Arrays are indexed ``[row, column]``; pixel ``(column=x, row=y)`` has its
centre at the point ``(x, y)``.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, TypeVar, Union

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from .errors import DimensionMismatch, EmptyMask, ImageNotFound, MalformedImage

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
_LUMA = np.array([0.299, 0.587, 0.114])


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit single channel image."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.size == 0:
            raise MalformedImage(f"Gray image must be a non-empty 2-D array, got shape {data.shape}")
        object.__setattr__(self, "data", _frozen(data.astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class _BitRaster:
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2 or bits.size == 0:
            raise MalformedImage(f"{type(self).__name__} must be a non-empty 2-D array, got shape {bits.shape}")
        object.__setattr__(self, "bits", _frozen(bits.astype(bool)))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def size(self) -> Tuple[int, int]:
        return self.width, self.height

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def points(self) -> np.ndarray:
        return pixel_points(self.bits)

    def __eq__(self, other):
        return type(other) is type(self) and np.array_equal(self.bits, other.bits)

    __hash__ = None


class RasterMask(_BitRaster):
    """Binary region mask."""


class EdgeMap(_BitRaster):
    """Binary edge map."""


Bits = TypeVar("Bits", RasterMask, EdgeMap)


def pixel_points(bits: np.ndarray) -> np.ndarray:
    """Return the (x, y) coordinates of set pixels as a float array, row-major order."""
    rows, cols = np.nonzero(bits)
    return np.column_stack((cols, rows)).astype(float)


def check_same_size(a, b, what: str = "raster") -> None:
    """Raise DimensionMismatch unless both rasters share width and height."""
    if a.size != b.size:
        raise DimensionMismatch(a.size, b.size, what)


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise ImageNotFound(path)
    try:
        image = Image.open(path)
        image.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise MalformedImage(f"Cannot decode {path}: {exc}") from exc
    if image.width == 0 or image.height == 0:
        raise MalformedImage(f"{path} has no pixels")
    return image


def _to_gray_array(image: Image.Image) -> np.ndarray:
    if image.mode in ("L", "1"):
        return np.asarray(image.convert("L"), dtype=np.uint8)
    if image.mode in ("I", "I;16", "I;16B", "F"):
        values = np.asarray(image, dtype=float)
        return np.clip(np.rint(values), 0, 255).astype(np.uint8)
    rgb = np.asarray(image.convert("RGB"), dtype=float)
    return np.clip(np.rint(rgb @ _LUMA), 0, 255).astype(np.uint8)


def load_gray(path: PathLike) -> GrayImage:
    """
    Decode a PNG/JPEG file into an 8-bit gray image.

    Colour images are reduced with 0.299R + 0.587G + 0.114B, rounded; alpha is ignored.
    """
    image = _open(path)
    gray = GrayImage(_to_gray_array(image))
    logger.debug("Loaded %s (%dx%d, mode %s)", path, gray.width, gray.height, image.mode)
    return gray


def read_size(path: PathLike) -> Tuple[int, int]:
    """(width, height) from the file header, without decoding pixels."""
    path = Path(path)
    if not path.is_file():
        raise ImageNotFound(path)
    try:
        with Image.open(path) as image:
            return image.size
    except (UnidentifiedImageError, OSError) as exc:
        raise MalformedImage(f"Cannot decode {path}: {exc}") from exc


def load_mask(path: PathLike) -> RasterMask:
    """Read a mask file; gray values >= 128 are set."""
    return RasterMask(load_gray(path).data >= 128)


def load_edge_map(path: PathLike, threshold: int = 128) -> EdgeMap:
    """Read an edge map file; gray values >= threshold are edges."""
    return EdgeMap(load_gray(path).data >= threshold)


def save_gray(image: GrayImage, path: PathLike) -> None:
    Image.fromarray(np.asarray(image.data, dtype=np.uint8)).save(Path(path), format="PNG")


def save_bits(raster: _BitRaster, path: PathLike) -> None:
    """Write a mask or edge map as an 8-bit PNG with values 0 and 255."""
    values = np.where(raster.bits, 255, 0).astype(np.uint8)
    Image.fromarray(values).save(Path(path), format="PNG")


def resize_bilinear(values: np.ndarray, size: Tuple[int, int]) -> np.ndarray:
    """Bilinearly resample a 2-D array to ``size`` = (width, height); returns float32."""
    width, height = size
    if width <= 0 or height <= 0:
        raise ValueError(f"Target size must be positive, got {size}")
    source = Image.fromarray(np.asarray(values, dtype=np.float32))
    if source.size == (width, height):
        return np.asarray(source, dtype=np.float32)
    return np.asarray(source.resize((width, height), Image.Resampling.BILINEAR), dtype=np.float32)


def mask_contour(mask: RasterMask) -> EdgeMap:
    """Mask pixels with at least one 4-neighbour outside the mask or outside the image."""
    if mask.is_empty:
        raise EmptyMask("Cannot take the contour of an empty mask")
    padded = np.pad(mask.bits, 1, constant_values=False)
    interior = (
        padded[1:-1, 1:-1]
        & padded[:-2, 1:-1]
        & padded[2:, 1:-1]
        & padded[1:-1, :-2]
        & padded[1:-1, 2:]
    )
    return EdgeMap(mask.bits & ~interior)


def _square(radius: int) -> np.ndarray:
    return np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)


def dilate(raster: Bits, radius: int) -> Bits:
    """Chebyshev dilation: set every pixel within ``radius`` of a set pixel."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return raster
    grown = ndimage.binary_dilation(raster.bits, structure=_square(int(radius)))
    return type(raster)(grown)


def erode(raster: Bits, radius: int) -> Bits:
    """Chebyshev erosion; pixels outside the image count as unset."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return raster
    shrunk = ndimage.binary_erosion(raster.bits, structure=_square(int(radius)), border_value=0)
    return type(raster)(shrunk)


def mask_iou(a: RasterMask, b: RasterMask) -> float:
    """Intersection over union; two empty masks score 1.0."""
    check_same_size(a, b, "mask")
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 1.0
    return float(np.count_nonzero(a.bits & b.bits)) / float(union)
