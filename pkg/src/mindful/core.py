"""Core domain types shared by the whole explanation pipeline.

Images, segment maps, superpixel masks, classifier outputs, box annotations
and pixel masks. Every type validates its invariants on construction and is
immutable afterwards, so instances can be shared freely between threads.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "ContractViolation",
    "ImageBuffer",
    "SegmentMap",
    "MaskVector",
    "ClassifierOutput",
    "BoxAnnotation",
    "AnnotationSet",
    "BinaryPixelMask",
    "SegmentFiller",
    "apply_mask",
    "boxes_to_pixel_mask",
]


class ContractViolation(ValueError):
    """A documented precondition was broken by the caller."""


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Image with float intensities in [0, 1], stored row-major as (H, W, C).

    channels is 1 for grayscale and 3 for RGB. 8-bit sources are normalized
    by dividing by 255 at ingestion so all arithmetic happens in one numeric
    domain.
    """

    width: int
    height: int
    channels: int
    data: np.ndarray

    def __post_init__(self) -> None:
        if self.channels not in (1, 3):
            raise ContractViolation("channels must be 1 (grayscale) or 3 (RGB)")
        if self.width < 1 or self.height < 1:
            raise ContractViolation("image dimensions must be positive")
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.shape != (self.height, self.width, self.channels):
            raise ContractViolation(
                f"data shape {arr.shape} does not match "
                f"(height={self.height}, width={self.width}, channels={self.channels})"
            )
        if not np.isfinite(arr).all():
            raise ContractViolation("intensities must be finite")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ContractViolation("intensities must lie in [0, 1]")
        object.__setattr__(self, "data", _readonly(arr))

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ImageBuffer":
        """Build from an (H, W) or (H, W, C) float array already in [0, 1]."""
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3:
            raise ContractViolation(f"expected 2-D or 3-D array, got ndim={arr.ndim}")
        h, w, c = arr.shape
        return cls(width=w, height=h, channels=c, data=arr.copy())

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.height, self.width, self.channels)


@dataclass(frozen=True, eq=False)
class SegmentMap:
    """Per-pixel superpixel labels forming a full partition of the image.

    Labels are contiguous: every value in [0, segment_count) occurs at least
    once, and no pixel carries any other value.
    """

    width: int
    height: int
    labels: np.ndarray
    segment_count: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.labels, dtype=np.int64)
        if arr.shape != (self.height, self.width):
            raise ContractViolation(
                f"labels shape {arr.shape} does not match (height, width)"
            )
        if self.segment_count < 1:
            raise ContractViolation("segment_count must be >= 1")
        if arr.min() < 0 or arr.max() >= self.segment_count:
            raise ContractViolation("labels must lie in [0, segment_count)")
        counts = np.bincount(arr.ravel(), minlength=self.segment_count)
        if (counts == 0).any():
            missing = int(np.flatnonzero(counts == 0)[0])
            raise ContractViolation(f"labels are not contiguous: {missing} never occurs")
        object.__setattr__(self, "labels", _readonly(arr))

    @classmethod
    def from_labels(cls, labels: np.ndarray) -> "SegmentMap":
        arr = np.asarray(labels, dtype=np.int64)
        if arr.ndim != 2:
            raise ContractViolation("labels must be a 2-D array")
        h, w = arr.shape
        return cls(width=w, height=h, labels=arr.copy(), segment_count=int(arr.max()) + 1)

    @cached_property
    def segment_sizes(self) -> np.ndarray:
        sizes = np.bincount(self.labels.ravel(), minlength=self.segment_count)
        return _readonly(sizes)

    def pixels_of(self, segment: int) -> np.ndarray:
        """Boolean (H, W) membership mask of one segment."""
        if not 0 <= segment < self.segment_count:
            raise ContractViolation(f"segment {segment} out of range")
        return self.labels == segment


@dataclass(frozen=True, eq=False)
class MaskVector:
    """Binary on/off vector over superpixels: 1 keeps a superpixel, 0 deactivates it."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.ndim != 1 or arr.size == 0:
            raise ContractViolation("mask must be a non-empty 1-D vector")
        if not np.isin(arr, (0, 1)).all():
            raise ContractViolation("mask entries must be exactly 0 or 1")
        object.__setattr__(self, "bits", _readonly(arr.astype(np.uint8)))

    @classmethod
    def all_active(cls, length: int) -> "MaskVector":
        return cls(np.ones(length, dtype=np.uint8))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "MaskVector":
        return cls(np.asarray(list(bits), dtype=np.uint8))

    def __len__(self) -> int:
        return int(self.bits.size)

    @property
    def deactivated_count(self) -> int:
        return int(self.bits.size - self.bits.sum())

    def tobytes(self) -> bytes:
        return self.bits.tobytes()


@dataclass(frozen=True)
class ClassifierOutput:
    """Per-class probabilities. Multi-label: no sum-to-one requirement."""

    probabilities: Mapping[str, float]

    def __post_init__(self) -> None:
        probs = dict(self.probabilities)
        for name, p in probs.items():
            if not np.isfinite(p) or not 0.0 <= p <= 1.0:
                raise ContractViolation(f"probability for {name!r} must be in [0, 1], got {p}")
        object.__setattr__(self, "probabilities", probs)


@dataclass(frozen=True)
class BoxAnnotation:
    """One ground-truth bounding box in pixel coordinates, half-open on both axes."""

    image_id: str
    class_id: str
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (0 <= self.x_min < self.x_max and 0 <= self.y_min < self.y_max):
            raise ContractViolation(
                f"degenerate box ({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )


@dataclass(frozen=True)
class AnnotationSet:
    """Collection of bounding boxes; multiple boxes per (image, class) are allowed."""

    entries: tuple[BoxAnnotation, ...]

    @classmethod
    def from_entries(cls, entries: Iterable[BoxAnnotation]) -> "AnnotationSet":
        return cls(tuple(entries))

    def boxes_for(self, image_id: str, class_id: str) -> list[BoxAnnotation]:
        return [e for e in self.entries if e.image_id == image_id and e.class_id == class_id]

    def image_ids(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.image_id, None)
        return list(seen)

    def classes_for(self, image_id: str) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            if e.image_id == image_id:
                seen.setdefault(e.class_id, None)
        return list(seen)


@dataclass(frozen=True, eq=False)
class BinaryPixelMask:
    """Row-major binary mask over the pixel grid."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits)
        if arr.shape != (self.height, self.width):
            raise ContractViolation(f"bits shape {arr.shape} does not match (height, width)")
        object.__setattr__(self, "bits", _readonly(arr.astype(bool)))

    @classmethod
    def zeros(cls, width: int, height: int) -> "BinaryPixelMask":
        return cls(width=width, height=height, bits=np.zeros((height, width), dtype=bool))

    @property
    def set_count(self) -> int:
        return int(self.bits.sum())

    def is_empty(self) -> bool:
        return not self.bits.any()


class SegmentFiller:
    """Applies superpixel masks to one fixed image.

    Precomputes the per-channel mean of every segment of the original image;
    deactivating a segment replaces all its pixels with that mean. Means are
    always taken from the original image, never from previously masked output.
    """

    def __init__(self, image: ImageBuffer, segmap: SegmentMap):
        if (image.width, image.height) != (segmap.width, segmap.height):
            raise ContractViolation(
                f"image {image.width}x{image.height} does not match "
                f"segment map {segmap.width}x{segmap.height}"
            )
        self.image = image
        self.segmap = segmap
        flat = segmap.labels.ravel()
        counts = np.bincount(flat, minlength=segmap.segment_count).astype(np.float64)
        means = np.empty((segmap.segment_count, image.channels))
        for c in range(image.channels):
            chan = image.data[:, :, c].ravel()
            sums = np.bincount(flat, weights=chan, minlength=segmap.segment_count)
            means[:, c] = sums / counts
            # snap already-constant segments to their exact value so that
            # re-masking an output reproduces it bit for bit (idempotency)
            hi = np.full(segmap.segment_count, -np.inf)
            lo = np.full(segmap.segment_count, np.inf)
            np.maximum.at(hi, flat, chan)
            np.minimum.at(lo, flat, chan)
            constant = hi == lo
            means[constant, c] = hi[constant]
        self.segment_means = _readonly(means)
        self._mean_image = _readonly(means[segmap.labels])

    def apply(self, mask: MaskVector) -> ImageBuffer:
        if len(mask) != self.segmap.segment_count:
            raise ContractViolation(
                f"mask length {len(mask)} does not match segment count "
                f"{self.segmap.segment_count}"
            )
        if mask.deactivated_count == 0:
            return self.image
        deactivated = mask.bits[self.segmap.labels] == 0
        out = np.where(deactivated[:, :, np.newaxis], self._mean_image, self.image.data)
        return ImageBuffer(width=self.image.width, height=self.image.height,
                           channels=self.image.channels, data=out)


def apply_mask(image: ImageBuffer, segmap: SegmentMap, mask: MaskVector) -> ImageBuffer:
    """Replace every deactivated segment's pixels with that segment's per-channel mean."""
    return SegmentFiller(image, segmap).apply(mask)


def boxes_to_pixel_mask(ann: AnnotationSet, image_id: str, class_id: str,
                        width: int, height: int) -> BinaryPixelMask:
    """Union of the matching boxes as a pixel mask (half-open box convention).

    No matching entries is not an error: an all-zero mask is returned and a
    warning is emitted, so callers can decide how to treat unannotated pairs.
    """
    boxes = ann.boxes_for(image_id, class_id)
    bits = np.zeros((height, width), dtype=bool)
    if not boxes:
        warnings.warn(
            f"no annotation boxes for image {image_id!r} class {class_id!r}; mask is empty",
            stacklevel=2,
        )
        return BinaryPixelMask(width=width, height=height, bits=bits)
    for box in boxes:
        if box.x_max > width or box.y_max > height:
            raise ContractViolation(
                f"box ({box.x_min}, {box.y_min}, {box.x_max}, {box.y_max}) exceeds "
                f"image bounds {width}x{height}"
            )
        bits[box.y_min:box.y_max, box.x_min:box.x_max] = True
    return BinaryPixelMask(width=width, height=height, bits=bits)
