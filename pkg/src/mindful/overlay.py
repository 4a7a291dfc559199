"""PNG overlay rendering: yellow outlines around selected superpixels, with
optional ground-truth boxes drawn in green."""
from __future__ import annotations

import numpy as np

from .core import BoxAnnotation, ImageBuffer, SegmentMap
from .surrogate import ExplanationResult

__all__ = ["render_overlay"]

_YELLOW = (1.0, 1.0, 0.0)
_GREEN = (0.1, 0.8, 0.1)


def _boundary(member: np.ndarray) -> np.ndarray:
    """Pixels of the region that touch a non-member 4-neighbor or the border."""
    edge = np.zeros_like(member)
    edge[:-1, :] |= member[:-1, :] & ~member[1:, :]
    edge[1:, :] |= member[1:, :] & ~member[:-1, :]
    edge[:, :-1] |= member[:, :-1] & ~member[:, 1:]
    edge[:, 1:] |= member[:, 1:] & ~member[:, :-1]
    edge[0, :] |= member[0, :]
    edge[-1, :] |= member[-1, :]
    edge[:, 0] |= member[:, 0]
    edge[:, -1] |= member[:, -1]
    return edge


def render_overlay(image: ImageBuffer, segmap: SegmentMap,
                   result: ExplanationResult,
                   boxes: list[BoxAnnotation] | None = None) -> ImageBuffer:
    if image.channels == 1:
        rgb = np.repeat(image.data, 3, axis=2).copy()
    else:
        rgb = image.data.copy()
    if result.selected_top_k:
        member = np.isin(segmap.labels, list(result.selected_top_k))
        rgb[_boundary(member)] = _YELLOW
    for box in boxes or []:
        x0, y0 = box.x_min, box.y_min
        x1, y1 = min(box.x_max, image.width), min(box.y_max, image.height)
        rgb[y0, x0:x1] = _GREEN
        rgb[y1 - 1, x0:x1] = _GREEN
        rgb[y0:y1, x0] = _GREEN
        rgb[y0:y1, x1 - 1] = _GREEN
    return ImageBuffer.from_array(rgb)
