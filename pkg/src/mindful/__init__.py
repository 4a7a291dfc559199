"""Deterministic graph-guided perturbation explanations for black-box image
classifiers, with a random-perturbation baseline and an evaluation harness."""

from .core import (AnnotationSet, BinaryPixelMask, BoxAnnotation, ClassifierOutput,
                   ContractViolation, ImageBuffer, MaskVector, SegmentMap,
                   apply_mask, boxes_to_pixel_mask)
from .graph import AdjacencyGraph, build_graph, incident_edges, remove_vertex
from .sampler import MindfulConfig, SampleRecord, SampleTable, decision_module, generate
from .baseline import RandomSamplerConfig, generate_random
from .surrogate import (ExplanationResult, SurrogateConfig, explain,
                        explain_top_classes, fit, proximity_weight)
from .metrics import (StabilityReport, iou, js_div, kl_div, localization_precision,
                      stability_score, to_distribution)
from .classifier import (LinearClass, LinearClassifier, PatchClass, PatchClassifier,
                         RemoteClassifier, ThresholdTable, calibrate_thresholds,
                         top_k_classes)
from .segmentation import (SegmenterConfig, load_precomputed, segment_felzenszwalb,
                           segment_slic)

__version__ = "0.1.0"
