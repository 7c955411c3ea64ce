"""
Exception hierarchy for plane mask refinement.
"""

from pathlib import Path
from typing import Optional, Union


class PlaneRefineError(Exception):
    """Base class for every error raised by planerefine."""


class ImageNotFound(PlaneRefineError, FileNotFoundError):
    """An input raster does not exist."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        super().__init__(f"Input file not found: {self.path}")


class MalformedImage(PlaneRefineError, ValueError):
    """An input raster could not be decoded or has no pixels."""


class ImageTooSmall(PlaneRefineError, ValueError):
    """The raster is smaller than the operator's support."""


class EmptyMask(PlaneRefineError, ValueError):
    """A mask without any set pixel was passed where one is required."""


class DimensionMismatch(PlaneRefineError, ValueError):
    """Two rasters that must share a grid have different sizes."""

    def __init__(self, expected, actual, what: str = "raster"):
        self.expected = tuple(expected)
        self.actual = tuple(actual)
        super().__init__(f"{what} has size {self.actual}, expected {self.expected}")


class DegenerateHistogram(PlaneRefineError, ValueError):
    """Fewer than two histogram bins are populated."""


class DegenerateGeometry(PlaneRefineError, ValueError):
    """Points or polygons are too few, coincident or collinear."""


class AssemblyError(PlaneRefineError):
    """Selected edges could not be closed into a simple polygon."""


class InsufficientEdges(AssemblyError):
    """Fewer than three edges are available for assembly."""


class DatasetError(PlaneRefineError, ValueError):
    """A dataset manifest or annotation file is invalid."""

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None,
                 json_path: Optional[str] = None):
        self.path = Path(path) if path is not None else None
        self.json_path = json_path
        where = []
        if self.path is not None:
            where.append(str(self.path))
        if json_path:
            where.append(json_path)
        prefix = f"{': '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")
