"""Locally weighted linear surrogate fitting and explanation extraction.

Samples are weighted by an exponential kernel on the cosine distance between
each mask and the all-ones instance, then a ridge-penalized weighted least
squares problem is solved through the normal equations with a Cholesky
factorization (the intercept is never penalized). Superpixels are ranked by
descending signed coefficient; the explanation keeps the top-k strictly
positive ones and renders their union as a pixel mask.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .baseline import RandomSamplerConfig, generate_random
from .classifier import BaseClassifier, ThresholdTable, top_k_classes
from .core import (BinaryPixelMask, ContractViolation, ImageBuffer, MaskVector,
                   SegmentFiller, SegmentMap)
from .graph import AdjacencyGraph
from .sampler import MindfulConfig, SampleTable, generate

__all__ = [
    "SurrogateConfig",
    "ExplanationResult",
    "proximity_weight",
    "proximity_weights",
    "fit",
    "explain",
    "explain_top_classes",
    "result_to_dict",
    "result_from_dict",
    "rle_encode",
    "rle_decode",
]


@dataclass(frozen=True)
class SurrogateConfig:
    """Kernel width for locality weighting and ridge strength for complexity."""

    kernel_width: float = 0.25
    ridge_lambda: float = 1.0
    distance: str = "cosine"

    def __post_init__(self) -> None:
        if self.kernel_width <= 0:
            raise ContractViolation("kernel_width must be positive")
        if self.ridge_lambda < 0:
            raise ContractViolation("ridge_lambda must be non-negative")
        if self.distance != "cosine":
            raise ContractViolation(f"unsupported distance {self.distance!r}")


@dataclass
class ExplanationResult:
    """Per-class surrogate coefficients and the derived explanation mask."""

    class_id: str
    coefficients: np.ndarray
    intercept: float
    ranked_superpixels: tuple[int, ...]
    selected_top_k: tuple[int, ...]
    explanation_pixel_mask: BinaryPixelMask
    sample_count_used: int
    runtime_seconds: float


def proximity_weight(mask: MaskVector, cfg: SurrogateConfig) -> float:
    """exp(-d^2 / kernel_width^2) with d the cosine distance to the all-ones mask.

    For a binary mask with a active bits out of S, cosine similarity to the
    all-ones vector is sqrt(a / S); the all-zeros mask has no direction, so
    its distance is defined as the maximal 1.
    """
    active = int(mask.bits.sum())
    if active == 0:
        d = 1.0
    else:
        d = 1.0 - np.sqrt(active / len(mask))
    return float(np.exp(-(d * d) / (cfg.kernel_width ** 2)))


def proximity_weights(masks: Sequence[MaskVector], cfg: SurrogateConfig) -> np.ndarray:
    return np.array([proximity_weight(m, cfg) for m in masks])


def fit(masks: Sequence[MaskVector], responses: Sequence[float],
        cfg: SurrogateConfig) -> tuple[np.ndarray, float]:
    """Weighted ridge regression via normal equations and Cholesky.

    Minimizes sum_i w_i (y_i - b0 - b . m_i)^2 + lambda ||b||^2 with the
    kernel weights normalized to sum 1 (so scaling all weights by a positive
    constant cannot change the solution). Returns (coefficients, intercept).
    """
    if len(masks) != len(responses):
        raise ContractViolation("masks and responses must have equal length")
    if len(masks) < 2:
        raise ContractViolation("need at least 2 samples to fit")
    m = np.asarray([mask.bits for mask in masks], dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    if ((y < 0) | (y > 1)).any():
        raise ContractViolation("responses must lie in [0, 1]")
    w = proximity_weights(masks, cfg)
    total = w.sum()
    if total <= 0.0:
        raise ContractViolation(
            "proximity weights underflowed to zero; increase kernel_width")
    w = w / total
    x = np.hstack([np.ones((m.shape[0], 1)), m])
    xw = x * w[:, np.newaxis]
    a = xw.T @ x
    a[1:, 1:] += cfg.ridge_lambda * np.eye(m.shape[1])
    b = xw.T @ y
    try:
        beta = linalg.cho_solve(linalg.cho_factor(a, lower=True), b)
    except np.linalg.LinAlgError as exc:
        raise ContractViolation(
            "normal equations are singular; set ridge_lambda > 0"
        ) from exc
    return beta[1:], float(beta[0])


def _rank_and_select(coefficients: np.ndarray, top_k: int) -> tuple[tuple[int, ...],
                                                                    tuple[int, ...]]:
    s = coefficients.size
    order = sorted(range(s), key=lambda i: (-coefficients[i], i))
    selected = [i for i in order[:top_k] if coefficients[i] > 0]
    return tuple(order), tuple(selected)


def _selection_mask(segmap: SegmentMap, selected: Sequence[int]) -> BinaryPixelMask:
    bits = np.isin(segmap.labels, list(selected)) if selected else np.zeros(
        (segmap.height, segmap.width), dtype=bool)
    return BinaryPixelMask(width=segmap.width, height=segmap.height, bits=bits)


def explain(
    samples: SampleTable | Sequence[MaskVector],
    image: ImageBuffer,
    segmap: SegmentMap,
    class_id: str,
    h: BaseClassifier,
    top_k: int,
    cfg: SurrogateConfig,
    *,
    responses: Sequence[float] | None = None,
    dedupe: bool = False,
) -> ExplanationResult:
    """Fit the surrogate for one class and extract its ranked explanation.

    Responses come from the sample table's cache (each sample was already
    classified once during generation) or from the optional responses
    argument; any mask without a cached response is classified here.
    """
    if top_k < 1:
        raise ContractViolation("top_k must be >= 1")
    start = time.perf_counter()
    if isinstance(samples, SampleTable):
        masks = samples.masks()
        if responses is None:
            responses = list(samples.responses)
    else:
        masks = list(samples)
        responses = list(responses) if responses is not None else [float("nan")] * len(masks)
    if len(responses) != len(masks):
        raise ContractViolation("responses and masks must have equal length")
    filler: SegmentFiller | None = None
    resolved: list[float] = []
    for mask, response in zip(masks, responses):
        if np.isnan(response):
            if filler is None:
                filler = SegmentFiller(image, segmap)
            out = h.predict(filler.apply(mask))
            if class_id not in out.probabilities:
                raise ContractViolation(f"class {class_id!r} unknown to classifier")
            response = out.probabilities[class_id]
        resolved.append(float(response))
    if dedupe:
        seen: dict[bytes, None] = {}
        unique_masks: list[MaskVector] = []
        unique_responses: list[float] = []
        for mask, response in zip(masks, resolved):
            key = mask.tobytes()
            if key not in seen:
                seen[key] = None
                unique_masks.append(mask)
                unique_responses.append(response)
        masks, resolved = unique_masks, unique_responses
    if len(masks) < 2:
        # a fully pruned generation run leaves nothing to fit; surface an
        # explicitly empty explanation instead of failing the whole pipeline
        warnings.warn(
            f"only {len(masks)} sample(s) for class {class_id!r}; explanation is empty",
            stacklevel=2,
        )
        return ExplanationResult(
            class_id=class_id,
            coefficients=np.zeros(segmap.segment_count),
            intercept=0.0,
            ranked_superpixels=tuple(range(segmap.segment_count)),
            selected_top_k=(),
            explanation_pixel_mask=_selection_mask(segmap, ()),
            sample_count_used=len(masks),
            runtime_seconds=time.perf_counter() - start,
        )
    coefficients, intercept = fit(masks, resolved, cfg)
    ranked, selected = _rank_and_select(coefficients, top_k)
    if not selected:
        warnings.warn(
            f"no positive coefficients for class {class_id!r}: explanation is empty",
            stacklevel=2,
        )
    pixel_mask = _selection_mask(segmap, selected)
    return ExplanationResult(
        class_id=class_id,
        coefficients=coefficients,
        intercept=intercept,
        ranked_superpixels=ranked,
        selected_top_k=selected,
        explanation_pixel_mask=pixel_mask,
        sample_count_used=len(masks),
        runtime_seconds=time.perf_counter() - start,
    )


def explain_top_classes(
    image: ImageBuffer,
    segmap: SegmentMap,
    h: BaseClassifier,
    *,
    k_classes: int = 3,
    top_k: int = 4,
    method: str = "mindful",
    mindful_cfg: MindfulConfig | None = None,
    thresholds: ThresholdTable | None = None,
    random_cfg: RandomSamplerConfig | None = None,
    surrogate_cfg: SurrogateConfig | None = None,
    graph: AdjacencyGraph | None = None,
) -> list[ExplanationResult]:
    """One explanation per top-predicted class of the unperturbed image.

    The graph-guided method generates a fresh table per class using that
    class's threshold; the random baseline shares one mask list across
    classes and classifies each perturbed image once, reusing the full
    per-class output.
    """
    surrogate_cfg = surrogate_cfg or SurrogateConfig()
    out = h.predict(image)
    if k_classes > len(out.probabilities):
        warnings.warn(
            f"requested {k_classes} classes but classifier only has "
            f"{len(out.probabilities)}",
            stacklevel=2,
        )
    classes = top_k_classes(out, k_classes)
    results: list[ExplanationResult] = []
    if method == "mindful":
        if mindful_cfg is None:
            raise ContractViolation("mindful method needs a MindfulConfig")
        for class_id in classes:
            threshold = (thresholds.get(class_id, mindful_cfg.threshold)
                         if thresholds is not None else mindful_cfg.threshold)
            cfg = MindfulConfig(threshold=threshold, max_level=mindful_cfg.max_level,
                                dedupe_masks=mindful_cfg.dedupe_masks)
            start = time.perf_counter()
            table = generate(image, segmap, class_id, h, cfg, graph=graph)
            result = explain(table, image, segmap, class_id, h, top_k, surrogate_cfg,
                             dedupe=cfg.dedupe_masks)
            result.runtime_seconds = time.perf_counter() - start
            results.append(result)
        return results
    if method == "random-baseline":
        if random_cfg is None:
            raise ContractViolation("random-baseline method needs a RandomSamplerConfig")
        start = time.perf_counter()
        masks = generate_random(segmap.segment_count, random_cfg)
        filler = SegmentFiller(image, segmap)
        outputs = [h.predict(filler.apply(mask)) for mask in masks]
        shared = time.perf_counter() - start
        for class_id in classes:
            per_class = [o.probabilities[class_id] for o in outputs]
            result = explain(masks, image, segmap, class_id, h, top_k, surrogate_cfg,
                             responses=per_class)
            result.runtime_seconds += shared / len(classes)
            results.append(result)
        return results
    raise ContractViolation(f"unknown method {method!r}")


def rle_encode(mask: BinaryPixelMask) -> dict:
    """Run-length encode row-major bits: alternating runs, first run counts zeros."""
    flat = mask.bits.ravel()
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate([[0], changes])
    ends = np.concatenate([changes, [flat.size]])
    runs: list[int] = [0] if flat[0] else []
    runs.extend(int(e - s) for s, e in zip(starts, ends))
    return {"width": mask.width, "height": mask.height, "runs": runs}


def rle_decode(obj: dict) -> BinaryPixelMask:
    width, height = int(obj["width"]), int(obj["height"])
    flat = np.zeros(width * height, dtype=bool)
    pos = 0
    value = False
    for run in obj["runs"]:
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    if pos != flat.size:
        raise ContractViolation(f"run lengths cover {pos} of {flat.size} pixels")
    return BinaryPixelMask(width=width, height=height, bits=flat.reshape(height, width))


def result_to_dict(result: ExplanationResult) -> dict:
    """JSON-ready form. Wall-clock runtime is deliberately excluded so that
    repeated runs of a deterministic pipeline serialize byte-identically."""
    return {
        "class_id": result.class_id,
        "coefficients": [float(c) for c in result.coefficients],
        "intercept": result.intercept,
        "ranked_superpixels": list(result.ranked_superpixels),
        "selected_top_k": list(result.selected_top_k),
        "sample_count_used": result.sample_count_used,
        "pixel_mask_rle": rle_encode(result.explanation_pixel_mask),
    }


def result_from_dict(obj: dict) -> ExplanationResult:
    return ExplanationResult(
        class_id=obj["class_id"],
        coefficients=np.asarray(obj["coefficients"], dtype=np.float64),
        intercept=float(obj["intercept"]),
        ranked_superpixels=tuple(obj["ranked_superpixels"]),
        selected_top_k=tuple(obj["selected_top_k"]),
        explanation_pixel_mask=rle_decode(obj["pixel_mask_rle"]),
        sample_count_used=int(obj["sample_count_used"]),
        runtime_seconds=0.0,
    )
