"""Experiment orchestration: single-image explanation, threshold calibration,
the benchmark grid, and metric evaluation over saved explanations.

Grid semantics: one cell per (segmenter, method variant, top_k). Every cell
runs each corpus instance `runs` times. The graph-guided method ignores
seeds entirely; the random baseline uses seed base_seed + r for run r so its
run-to-run variance is measurable. Runtime is the wall clock of sampling
plus surrogate fitting; segmentation is excluded.
"""
from __future__ import annotations

import json
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .baseline import RandomSamplerConfig, generate_random
from .classifier import (BaseClassifier, ThresholdTable, calibrate_thresholds,
                         classifier_from_config, top_k_classes)
from .core import (AnnotationSet, BinaryPixelMask, ContractViolation, ImageBuffer,
                   SegmentMap, boxes_to_pixel_mask)
from .corpus import Corpus, load_corpus
from .dataio import atomic_write_text, write_csv
from .graph import build_graph
from .metrics import (localization_precision, mean_reference_iou, stability_score)
from .sampler import MindfulConfig, generate
from .segmentation import SegmenterConfig, segment_image
from .surrogate import (ExplanationResult, SurrogateConfig, explain,
                        explain_top_classes, result_to_dict)
from .svgplot import bar_chart_svg

__all__ = [
    "MethodVariant",
    "ExperimentConfig",
    "BenchmarkRow",
    "InstanceRow",
    "run_benchmark",
    "write_benchmark_outputs",
    "run_calibrate",
    "run_evaluate",
    "run_explain_command",
    "bbox_mode_mask",
]

BENCHMARK_HEADER = [
    "algorithm", "version", "segmenter", "top_k", "runs",
    "avg_superpixel_count", "avg_runtime_seconds", "avg_generated_samples",
    "stability_pairwise", "mean_gt_iou", "mean_localization_precision",
]
INSTANCE_HEADER = [
    "algorithm", "version", "segmenter", "top_k", "image_id", "class_id",
    "superpixel_count", "avg_generated_samples", "avg_runtime_seconds",
    "stability_pairwise", "mean_gt_iou", "mean_localization_precision",
    "gt_empty",
]
METRICS_HEADER = [
    "image_id", "class_id", "mode", "iou", "js_div",
    "localization_precision", "empty_explanation",
]


@dataclass(frozen=True)
class MethodVariant:
    """One benchmarked sampler configuration."""

    method: str  # mindful | random-baseline
    levels: int = 2
    num_samples: int = 1000

    def __post_init__(self) -> None:
        if self.method not in ("mindful", "random-baseline"):
            raise ContractViolation(f"unknown method {self.method!r}")

    @property
    def version(self) -> str:
        if self.method == "mindful":
            return f"levels={self.levels}"
        return f"samples={self.num_samples}"


@dataclass
class ExperimentConfig:
    corpus_dir: str | Path
    out_dir: str | Path
    segmenters: list[tuple[str, SegmenterConfig]] = field(default_factory=list)
    methods: list[MethodVariant] = field(default_factory=list)
    top_ks: list[int] = field(default_factory=lambda: [1, 4])
    runs: int = 10
    base_seed: int = 0
    threshold: float = 0.5
    thresholds_path: str | Path | None = None
    kernel_width: float = 0.25
    ridge_lambda: float = 1.0

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ContractViolation("runs must be >= 1")
        if any(k < 1 for k in self.top_ks):
            raise ContractViolation("top_k entries must be >= 1")


@dataclass(frozen=True)
class BenchmarkRow:
    algorithm: str
    version: str
    segmenter: str
    top_k: int
    runs: int
    avg_superpixel_count: float
    avg_runtime_seconds: float
    avg_generated_samples: float
    stability_pairwise: float
    mean_gt_iou: float
    mean_localization_precision: float

    def __post_init__(self) -> None:
        if min(self.avg_superpixel_count, self.avg_runtime_seconds,
               self.avg_generated_samples) < 0:
            raise ContractViolation("counts must be non-negative")
        for score in (self.stability_pairwise, self.mean_gt_iou,
                      self.mean_localization_precision):
            if not 0.0 <= score <= 1.0:
                raise ContractViolation(f"score {score} outside [0, 1]")

    def as_csv(self) -> list:
        return [self.algorithm, self.version, self.segmenter, self.top_k, self.runs,
                f"{self.avg_superpixel_count:.3f}", f"{self.avg_runtime_seconds:.6f}",
                f"{self.avg_generated_samples:.3f}", f"{self.stability_pairwise:.6f}",
                f"{self.mean_gt_iou:.6f}", f"{self.mean_localization_precision:.6f}"]


@dataclass(frozen=True)
class InstanceRow:
    algorithm: str
    version: str
    segmenter: str
    top_k: int
    image_id: str
    class_id: str
    superpixel_count: int
    avg_generated_samples: float
    avg_runtime_seconds: float
    stability_pairwise: float
    mean_gt_iou: float
    mean_localization_precision: float
    gt_empty: bool

    def as_csv(self) -> list:
        return [self.algorithm, self.version, self.segmenter, self.top_k,
                self.image_id, self.class_id, self.superpixel_count,
                f"{self.avg_generated_samples:.3f}", f"{self.avg_runtime_seconds:.6f}",
                f"{self.stability_pairwise:.6f}", f"{self.mean_gt_iou:.6f}",
                f"{self.mean_localization_precision:.6f}", int(self.gt_empty)]


def _instance_runs(
    variant: MethodVariant,
    image: ImageBuffer,
    segmap: SegmentMap,
    graph,
    class_id: str,
    h: BaseClassifier,
    threshold: float,
    top_k: int,
    runs: int,
    base_seed: int,
    surrogate_cfg: SurrogateConfig,
) -> tuple[list[ExplanationResult], list[int]]:
    """Repeat one instance; returns per-run results and generated-sample counts."""
    results = []
    counts = []
    for r in range(runs):
        start = time.perf_counter()
        if variant.method == "mindful":
            cfg = MindfulConfig(threshold=threshold, max_level=variant.levels)
            table = generate(image, segmap, class_id, h, cfg, graph=graph)
            result = explain(table, image, segmap, class_id, h, top_k, surrogate_cfg)
            counts.append(len(table))
        else:
            rcfg = RandomSamplerConfig(num_samples=variant.num_samples,
                                       rng_seed=base_seed + r)
            masks = generate_random(segmap.segment_count, rcfg)
            result = explain(masks, image, segmap, class_id, h, top_k, surrogate_cfg)
            counts.append(len(masks))
        result.runtime_seconds = time.perf_counter() - start
        results.append(result)
    return results, counts


def run_benchmark(cfg: ExperimentConfig,
                  corpus: Corpus | None = None) -> tuple[list[BenchmarkRow],
                                                         list[InstanceRow],
                                                         list[tuple[str, str]]]:
    """Run every grid cell; failed cells are recorded, surviving ones reported."""
    if corpus is None:
        corpus = load_corpus(cfg.corpus_dir)
    if not cfg.segmenters or not cfg.methods:
        raise ContractViolation("benchmark needs at least one segmenter and one method")
    h = classifier_from_config(corpus.classifier_config)
    thresholds = (ThresholdTable.load(cfg.thresholds_path)
                  if cfg.thresholds_path else None)
    surrogate_cfg = SurrogateConfig(kernel_width=cfg.kernel_width,
                                    ridge_lambda=cfg.ridge_lambda)
    segmap_cache: dict[tuple[str, str], SegmentMap] = {}
    rows: list[BenchmarkRow] = []
    instance_rows: list[InstanceRow] = []
    errors: list[tuple[str, str]] = []
    for seg_name, seg_cfg in cfg.segmenters:
        for variant in cfg.methods:
            for top_k in cfg.top_ks:
                cell = f"{seg_name}/{variant.method}/{variant.version}/top{top_k}"
                try:
                    cell_instances = _run_cell(
                        cell, corpus, h, thresholds, cfg, seg_name, seg_cfg,
                        variant, top_k, surrogate_cfg, segmap_cache)
                except Exception as exc:  # cell isolation: record and move on
                    errors.append((cell, f"{type(exc).__name__}: {exc}"))
                    continue
                instance_rows.extend(cell_instances)
                rows.append(_aggregate(variant, seg_name, top_k, cfg.runs,
                                       cell_instances))
    return rows, instance_rows, errors


def _run_cell(cell, corpus, h, thresholds, cfg, seg_name, seg_cfg, variant,
              top_k, surrogate_cfg, segmap_cache) -> list[InstanceRow]:
    out: list[InstanceRow] = []
    for inst in corpus.instances:
        key = (seg_name, inst.image_id)
        if key not in segmap_cache:
            segmap_cache[key] = segment_image(inst.image, seg_cfg)
        segmap = segmap_cache[key]
        graph = build_graph(segmap) if variant.method == "mindful" else None
        class_id = top_k_classes(h.predict(inst.image), 1)[0]
        threshold = (thresholds.get(class_id, cfg.threshold)
                     if thresholds is not None else cfg.threshold)
        results, counts = _instance_runs(
            variant, inst.image, segmap, graph, class_id, h, threshold,
            top_k, cfg.runs, cfg.base_seed, surrogate_cfg)
        masks = [r.explanation_pixel_mask for r in results]
        stability = (stability_score(masks).mean_stability
                     if cfg.runs >= 2 else 1.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gt = boxes_to_pixel_mask(corpus.annotations, inst.image_id, class_id,
                                     inst.image.width, inst.image.height)
            gt_empty = gt.is_empty()
            if gt_empty:
                gt_iou = 0.0
                precision = 0.0
            else:
                gt_iou = mean_reference_iou(masks, gt)
                precision = float(np.mean([
                    localization_precision(gt, m) if not m.is_empty() else 0.0
                    for m in masks]))
        out.append(InstanceRow(
            algorithm=variant.method, version=variant.version, segmenter=seg_name,
            top_k=top_k, image_id=inst.image_id, class_id=class_id,
            superpixel_count=segmap.segment_count,
            avg_generated_samples=float(np.mean(counts)),
            avg_runtime_seconds=float(np.mean([r.runtime_seconds for r in results])),
            stability_pairwise=stability, mean_gt_iou=gt_iou,
            mean_localization_precision=precision, gt_empty=gt_empty,
        ))
    return out


def _aggregate(variant: MethodVariant, seg_name: str, top_k: int, runs: int,
               cell_instances: list[InstanceRow]) -> BenchmarkRow:
    return BenchmarkRow(
        algorithm=variant.method,
        version=variant.version,
        segmenter=seg_name,
        top_k=top_k,
        runs=runs,
        avg_superpixel_count=float(np.mean(
            [r.superpixel_count for r in cell_instances])),
        avg_runtime_seconds=float(np.mean(
            [r.avg_runtime_seconds for r in cell_instances])),
        avg_generated_samples=float(np.mean(
            [r.avg_generated_samples for r in cell_instances])),
        stability_pairwise=float(np.mean(
            [r.stability_pairwise for r in cell_instances])),
        mean_gt_iou=float(np.mean([r.mean_gt_iou for r in cell_instances])),
        mean_localization_precision=float(np.mean(
            [r.mean_localization_precision for r in cell_instances])),
    )


def write_benchmark_outputs(out_dir: str | Path, rows: list[BenchmarkRow],
                            instance_rows: list[InstanceRow],
                            errors: list[tuple[str, str]]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "benchmark.csv", BENCHMARK_HEADER, [r.as_csv() for r in rows])
    write_csv(out / "stability.csv", INSTANCE_HEADER,
              [r.as_csv() for r in instance_rows])
    aggregates = [
        {"algorithm": r.algorithm, "version": r.version, "segmenter": r.segmenter,
         "top_k": r.top_k, "runs": r.runs,
         "avg_superpixel_count": r.avg_superpixel_count,
         "avg_runtime_seconds": r.avg_runtime_seconds,
         "avg_generated_samples": r.avg_generated_samples,
         "stability_pairwise": r.stability_pairwise,
         "mean_gt_iou": r.mean_gt_iou,
         "mean_localization_precision": r.mean_localization_precision}
        for r in rows
    ]
    atomic_write_text(out / "benchmark.json", json.dumps(aggregates, indent=2) + "\n")
    if errors:
        write_csv(out / "benchmark_errors.csv", ["cell", "error"], errors)
    labels = [f"{r.algorithm} {r.version} {r.segmenter} k={r.top_k}" for r in rows]
    atomic_write_text(out / "stability_per_method.svg", bar_chart_svg(
        "Stability by method", labels,
        [r.stability_pairwise for r in rows], "pairwise stability", y_max=1.0))
    atomic_write_text(out / "precision_per_method.svg", bar_chart_svg(
        "Localization precision by method", labels,
        [r.mean_localization_precision for r in rows],
        "localization precision", y_max=1.0))
    by_count = sorted(rows, key=lambda r: (r.avg_superpixel_count, r.algorithm,
                                           r.version, r.segmenter, r.top_k))
    atomic_write_text(out / "runtime_vs_superpixels.svg", bar_chart_svg(
        "Runtime by average superpixel count",
        [f"{r.avg_superpixel_count:.0f}sp {r.algorithm} {r.version}" for r in by_count],
        [r.avg_runtime_seconds for r in by_count], "runtime (s)"))


def run_calibrate(corpus_dir: str | Path, out_path: str | Path,
                  classifier: BaseClassifier | None = None) -> ThresholdTable:
    """Calibrate per-class thresholds over a labeled corpus and save them."""
    corpus = load_corpus(corpus_dir)
    if classifier is None:
        classifier = classifier_from_config(corpus.classifier_config)
    calibration = [(inst.image, inst.labels) for inst in corpus.instances]
    table = calibrate_thresholds(classifier, calibration)
    table.save(out_path)
    return table


def bbox_mode_mask(mask: BinaryPixelMask) -> BinaryPixelMask:
    """Tight bounding box per connected component, union-filled."""
    if mask.is_empty():
        return mask
    labeled, count = ndimage.label(mask.bits)
    bits = np.zeros_like(mask.bits)
    for sl in ndimage.find_objects(labeled):
        if sl is not None:
            bits[sl] = True
    return BinaryPixelMask(width=mask.width, height=mask.height, bits=bits)


def run_evaluate(explanation_dir: str | Path, annotations: AnnotationSet,
                 out_path: str | Path) -> tuple[list[list], list[str]]:
    """Score every saved explanation against the annotations.

    Emits one row per (image, class, mode) with mode in {raw, bbox}; image
    ids without any annotation are listed and skipped rather than failing.
    """
    from .metrics import iou as iou_metric, js_div, to_distribution
    from .surrogate import rle_decode

    rows: list[list] = []
    skipped: list[str] = []
    files = sorted(Path(explanation_dir).glob("*.explanation.json"))
    if not files:
        raise ContractViolation(f"no *.explanation.json files in {explanation_dir}")
    annotated_ids = set(annotations.image_ids())
    for path in files:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        image_id = doc["image_id"]
        if image_id not in annotated_ids:
            skipped.append(image_id)
            continue
        for entry in doc["results"]:
            class_id = entry["class_id"]
            rle = entry["pixel_mask_rle"]
            ex_raw = rle_decode(rle)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                gt = boxes_to_pixel_mask(annotations, image_id, class_id,
                                         ex_raw.width, ex_raw.height)
            if gt.is_empty():
                skipped.append(f"{image_id}:{class_id}")
                continue
            for mode, ex in (("raw", ex_raw), ("bbox", bbox_mode_mask(ex_raw))):
                empty = ex.is_empty()
                if empty:
                    row_iou, row_js, precision = 0.0, 1.0, 0.0
                else:
                    row_iou = iou_metric(gt, ex)
                    row_js = js_div(to_distribution(ex), to_distribution(gt))
                    precision = 1.0 - row_js
                rows.append([image_id, class_id, mode, f"{row_iou:.6f}",
                             f"{row_js:.6f}", f"{precision:.6f}", int(empty)])
    write_csv(out_path, METRICS_HEADER, rows)
    summary: dict[str, dict[str, float]] = {}
    for mode in ("raw", "bbox"):
        mode_rows = [r for r in rows if r[2] == mode]
        if mode_rows:
            summary[mode] = {
                "count": len(mode_rows),
                "mean_iou": float(np.mean([float(r[3]) for r in mode_rows])),
                "mean_js_div": float(np.mean([float(r[4]) for r in mode_rows])),
                "mean_localization_precision": float(
                    np.mean([float(r[5]) for r in mode_rows])),
            }
    summary_path = Path(out_path).with_suffix(".summary.json")
    atomic_write_text(summary_path, json.dumps(summary, indent=2) + "\n")
    if skipped:
        print(f"warning: skipped unannotated entries: {', '.join(skipped)}",
              file=sys.stderr)
    return rows, skipped


def run_explain_command(
    image: ImageBuffer,
    image_id: str,
    segmap: SegmentMap,
    h: BaseClassifier,
    out_dir: str | Path,
    *,
    method: str,
    segmenter_name: str,
    mindful_cfg: MindfulConfig | None = None,
    thresholds: ThresholdTable | None = None,
    random_cfg: RandomSamplerConfig | None = None,
    surrogate_cfg: SurrogateConfig | None = None,
    k_classes: int = 3,
    top_k: int = 4,
    overlay: bool = False,
    overlay_annotations: AnnotationSet | None = None,
    dump_samples: bool = False,
) -> Path:
    """Explain the top predicted classes of one image and write the JSON result."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = explain_top_classes(
        image, segmap, h, k_classes=k_classes, top_k=top_k, method=method,
        mindful_cfg=mindful_cfg, thresholds=thresholds, random_cfg=random_cfg,
        surrogate_cfg=surrogate_cfg)
    doc = {
        "image_id": image_id,
        "method": method,
        "segmenter": segmenter_name,
        "segment_count": segmap.segment_count,
        "results": [result_to_dict(r) for r in results],
    }
    path = out / f"{image_id}.explanation.json"
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    if dump_samples and method == "mindful":
        for result in results:
            threshold = (thresholds.get(result.class_id, mindful_cfg.threshold)
                         if thresholds is not None else mindful_cfg.threshold)
            cfg = MindfulConfig(threshold=threshold,
                                max_level=mindful_cfg.max_level,
                                dedupe_masks=mindful_cfg.dedupe_masks)
            table = generate(image, segmap, result.class_id, h, cfg)
            table.save(out / f"{image_id}.{result.class_id}.samples.jsonl")
    if overlay:
        from .overlay import render_overlay
        from .dataio import save_png

        for result in results:
            boxes = (overlay_annotations.boxes_for(image_id, result.class_id)
                     if overlay_annotations is not None else None)
            save_png(render_overlay(image, segmap, result, boxes=boxes),
                     out / f"{image_id}.{result.class_id}.overlay.png")
    return path
