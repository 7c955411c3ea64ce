import logging
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image, ImageDraw

from planerefine.geom import Polygon
from planerefine.raster import GrayImage, RasterMask, mask_contour

logger = logging.getLogger(__name__)

GT_COLOUR = (40, 90, 255)
REFINED_COLOUR = (255, 40, 40)


def save_overlay(image: GrayImage, refined: Sequence[Polygon], filename: Union[str, Path],
                 ground_truth: Sequence[RasterMask] = (), width: int = 2) -> Path:
    """Draw ground-truth contours in blue and refined polygons in red over the image, as PNG."""
    if not refined and not ground_truth:
        raise ValueError("Nothing to draw")

    # Start from the gray image as RGB
    canvas = np.repeat(np.asarray(image.data, dtype=np.uint8)[:, :, None], 3, axis=2)

    # Ground-truth contours are painted pixel by pixel
    for mask in ground_truth:
        if mask.size != image.size:
            raise ValueError(f"Ground-truth mask size {mask.size} differs from image size {image.size}")
        if not mask.is_empty:
            canvas[mask_contour(mask).bits] = GT_COLOUR

    picture = Image.fromarray(canvas)
    draw = ImageDraw.Draw(picture)

    # Refined outlines as closed polylines
    for polygon in refined:
        points = [(v.x, v.y) for v in polygon.vertices]
        draw.line(points + [points[0]], fill=REFINED_COLOUR, width=width)

    filename = Path(filename)
    picture.save(filename, format="PNG")
    logger.info("Overlay saved to %s", filename)
    return filename
