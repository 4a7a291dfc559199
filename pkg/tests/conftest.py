from __future__ import annotations

import numpy as np
import pytest

from mindful.classifier import FunctionClassifier
from mindful.core import ImageBuffer, SegmentMap


def textured_image(segmap: SegmentMap, seed: int = 0, channels: int = 1) -> ImageBuffer:
    """Random image in [0.2, 0.8] so every segment has strictly positive spread."""
    rng = np.random.Generator(np.random.PCG64(seed))
    arr = rng.uniform(0.2, 0.8, size=(segmap.height, segmap.width, channels))
    # guarantee spread even for 1-pixel-wide noise degeneracies
    arr[0, 0, :] = 0.19
    return ImageBuffer.from_array(arr)


def quadrant_segmap(size: int = 8) -> SegmentMap:
    half = size // 2
    labels = np.zeros((size, size), dtype=np.int64)
    labels[:half, half:] = 1
    labels[half:, :half] = 2
    labels[half:, half:] = 3
    return SegmentMap.from_labels(labels)


def strip_segmap(count: int, pixels_per_segment: int = 3) -> SegmentMap:
    """1-row image whose segments form a path graph 0-1-2-..."""
    labels = np.repeat(np.arange(count), pixels_per_segment)[np.newaxis, :]
    return SegmentMap.from_labels(labels)


def decoded_deactivation(image: ImageBuffer, reference: ImageBuffer,
                         segmap: SegmentMap) -> frozenset[int]:
    """Segments whose pixels differ from the reference image (textured originals only)."""
    changed = np.any(image.data != reference.data, axis=2)
    return frozenset(int(v) for v in np.unique(segmap.labels[changed]))


def rule_classifier(reference: ImageBuffer, segmap: SegmentMap, rule,
                    class_id: str = "t") -> FunctionClassifier:
    """Classifier whose probability is rule(deactivated segment ids)."""

    def fn(image: ImageBuffer):
        off = decoded_deactivation(image, reference, segmap)
        return {class_id: rule(off)}

    return FunctionClassifier([class_id], fn)


def accept_all_classifier(class_id: str = "t") -> FunctionClassifier:
    return FunctionClassifier([class_id], lambda image: {class_id: 1.0})


@pytest.fixture
def quadrants():
    segmap = quadrant_segmap(8)
    return textured_image(segmap, seed=3), segmap
