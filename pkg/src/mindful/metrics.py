"""Evaluation metrics: IOU, KL/JS divergence, localization precision, stability.

All divergences use the base-2 logarithm. JS divergence is computed with the
exact 0*log(0) = 0 convention, which keeps it symmetric to the bit, exactly 0
for identical distributions and exactly 1 for disjoint one-hot distributions.
KL divergence keeps an explicit epsilon smoothing term because its ratio can
otherwise divide by zero.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .core import BinaryPixelMask, ContractViolation

__all__ = [
    "PixelDistribution",
    "StabilityReport",
    "iou",
    "to_distribution",
    "kl_div",
    "js_div",
    "localization_precision",
    "stability_score",
    "mean_reference_iou",
    "DEFAULT_EPSILON",
]

DEFAULT_EPSILON = 1e-12


@dataclass(frozen=True, eq=False)
class PixelDistribution:
    """Probability distribution over the flattened pixel grid (sums to 1)."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.probabilities, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ContractViolation("distribution must be non-empty")
        if (arr < 0).any():
            raise ContractViolation("distribution entries must be non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > 1e-9:
            raise ContractViolation(f"distribution sums to {total}, expected 1")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "probabilities", arr)

    def __len__(self) -> int:
        return int(self.probabilities.size)


@dataclass(frozen=True)
class StabilityReport:
    """Pairwise-IOU stability over repeated runs on identical inputs."""

    pairwise_ious: tuple[float, ...]
    mean_stability: float
    run_count: int


def iou(gt: BinaryPixelMask, ex: BinaryPixelMask) -> float:
    """Intersection over union of two pixel masks; 1.0 when both are empty."""
    if (gt.width, gt.height) != (ex.width, ex.height):
        raise ContractViolation(
            f"mask dimensions differ: {gt.width}x{gt.height} vs {ex.width}x{ex.height}"
        )
    union = int(np.logical_or(gt.bits, ex.bits).sum())
    if union == 0:
        warnings.warn("IOU of two empty masks defined as 1.0", stacklevel=2)
        return 1.0
    inter = int(np.logical_and(gt.bits, ex.bits).sum())
    return inter / union


def to_distribution(mask: BinaryPixelMask) -> PixelDistribution:
    """Uniform distribution over the mask's set pixels."""
    count = mask.set_count
    if count == 0:
        raise ContractViolation("cannot normalize an empty mask into a distribution")
    probs = mask.bits.astype(np.float64).ravel() / count
    return PixelDistribution(probs)


def kl_div(ex: PixelDistribution, gt: PixelDistribution,
           epsilon: float = DEFAULT_EPSILON) -> float:
    """Smoothed Kullback-Leibler divergence, base 2: sum ex*log2((ex+eps)/(gt+eps))."""
    if len(ex) != len(gt):
        raise ContractViolation("distributions must have equal length")
    if epsilon <= 0:
        raise ContractViolation("epsilon must be positive")
    p = ex.probabilities
    q = gt.probabilities
    return float(np.sum(p * np.log2((p + epsilon) / (q + epsilon))))


def _kl_exact(p: np.ndarray, m: np.ndarray) -> float:
    # 0*log(0) = 0; wherever p > 0 the mixture m >= p/2 is strictly positive.
    idx = p > 0
    return float(np.sum(p[idx] * np.log2(p[idx] / m[idx])))


def js_div(ex: PixelDistribution, gt: PixelDistribution) -> float:
    """Jensen-Shannon divergence, base 2: bounded in [0, 1] and symmetric."""
    if len(ex) != len(gt):
        raise ContractViolation("distributions must have equal length")
    p = ex.probabilities
    q = gt.probabilities
    m = (p + q) / 2.0
    return (_kl_exact(p, m) + _kl_exact(q, m)) / 2.0


def localization_precision(gt_mask: BinaryPixelMask, ex_mask: BinaryPixelMask) -> float:
    """1 - JS divergence between the normalized explanation and ground truth.

    An empty explanation scores 0 with a warning; an empty ground truth is a
    contract violation (there is nothing to localize against).
    """
    if gt_mask.is_empty():
        raise ContractViolation("ground-truth mask must be non-empty")
    if ex_mask.is_empty():
        warnings.warn("empty explanation mask: localization precision is 0.0", stacklevel=2)
        return 0.0
    return 1.0 - js_div(to_distribution(ex_mask), to_distribution(gt_mask))


def stability_score(explanation_masks_per_run: Sequence[BinaryPixelMask]) -> StabilityReport:
    """Mean IOU over all unordered pairs of runs; 1.0 iff every run is identical."""
    runs = list(explanation_masks_per_run)
    if len(runs) < 2:
        raise ContractViolation("stability needs at least 2 runs")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # empty-vs-empty pairs legitimately score 1.0
        pair_ious = tuple(iou(a, b) for a, b in combinations(runs, 2))
    return StabilityReport(
        pairwise_ious=pair_ious,
        mean_stability=float(np.mean(pair_ious)),
        run_count=len(runs),
    )


def mean_reference_iou(explanation_masks_per_run: Sequence[BinaryPixelMask],
                       reference: BinaryPixelMask) -> float:
    """Mean IOU of each run's explanation against a fixed reference mask."""
    runs = list(explanation_masks_per_run)
    if not runs:
        raise ContractViolation("need at least one run")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return float(np.mean([iou(reference, m) for m in runs]))
