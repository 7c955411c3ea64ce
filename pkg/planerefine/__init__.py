"""
Refinement of coarse plane-segmentation masks against image edges.

The prior mask's neighbourhood is searched for straight edge segments, the
segments are grouped into hypotheses for the plane's outline, and the
endpoints of each edge are chosen by a cost on edge overlap and length. A
result that strays too far from the prior is replaced by the prior's
simplified convex hull.
"""

from .config import PipelineConfig, RefineConfig, load_config
from .errors import PlaneRefineError
from .raster import EdgeMap, GrayImage, RasterMask, load_gray, load_mask, mask_iou
from .refine import RefineReport, refine_mask

__version__ = "1.0.0"

__all__ = [
    "PipelineConfig",
    "RefineConfig",
    "load_config",
    "PlaneRefineError",
    "EdgeMap",
    "GrayImage",
    "RasterMask",
    "load_gray",
    "load_mask",
    "mask_iou",
    "RefineReport",
    "refine_mask",
]
