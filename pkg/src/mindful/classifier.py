"""Black-box classifier interface: deterministic builtins, a remote HTTP client,
and per-class confidence-threshold calibration.

Builtins are pure functions of the input image so repeated predictions are
bit-identical. Two are provided:

* ``PatchClassifier`` scores each class by the mean intensity inside a fixed
  rectangle, squashed through a sigmoid. Perturbing segments that straddle
  the rectangle changes that mean, so the planted rectangle doubles as
  ground truth for localization experiments.
* ``LinearClassifier`` scores each class as sigmoid(w . f + b) where f holds
  one feature per segment of an attached segment map: the segment's mean
  intensity, gated to zero when the segment is flat (all pixels equal).
  Mean-filling a segment flattens it exactly, so deactivated segments
  contribute nothing and the response is a known function of the mask; the
  affine form of that response is exposed as a closed-form oracle for
  surrogate-recovery tests.
"""
from __future__ import annotations

import base64
import json
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage

from .core import ClassifierOutput, ContractViolation, ImageBuffer, MaskVector, SegmentMap

__all__ = [
    "ClassifierError",
    "RemoteClassifierError",
    "BaseClassifier",
    "PatchClass",
    "PatchClassifier",
    "LinearClass",
    "LinearClassifier",
    "FunctionClassifier",
    "RemoteClassifier",
    "ThresholdTable",
    "predict_batch",
    "top_k_classes",
    "calibrate_thresholds",
    "sigmoid",
    "classifier_from_config",
    "load_classifier_config",
]


class ClassifierError(RuntimeError):
    """Classifier evaluation failed."""


class RemoteClassifierError(ClassifierError):
    """Remote transport or protocol failure; carries the request id for tracing."""

    def __init__(self, message: str, request_id: str):
        super().__init__(f"{message} (request id {request_id})")
        self.request_id = request_id


def sigmoid(z: float | np.ndarray) -> float | np.ndarray:
    """Numerically stable logistic function."""
    z = np.clip(z, -700.0, 700.0)
    return 1.0 / (1.0 + np.exp(-z))


class BaseClassifier:
    """Common surface: ordered class list plus predict/predict_batch."""

    class_names: tuple[str, ...]

    def predict(self, image: ImageBuffer) -> ClassifierOutput:
        raise NotImplementedError

    def predict_batch(self, images: Sequence[ImageBuffer]) -> list[ClassifierOutput]:
        """Element-wise predict, order preserved; a failure names the failing index."""
        out: list[ClassifierOutput] = []
        for i, image in enumerate(images):
            try:
                out.append(self.predict(image))
            except Exception as exc:
                raise ClassifierError(f"batch element {i} failed: {exc}") from exc
        return out


@dataclass(frozen=True)
class PatchClass:
    """One class scored from a fixed half-open rectangle (x_min, y_min, x_max, y_max)."""

    name: str
    region: tuple[int, int, int, int]
    gain: float
    bias: float

    def __post_init__(self) -> None:
        x0, y0, x1, y1 = self.region
        if not (0 <= x0 < x1 and 0 <= y0 < y1):
            raise ContractViolation(f"degenerate region {self.region}")


class PatchClassifier(BaseClassifier):
    """sigmoid(gain * meanIntensity(region) + bias), one rectangle per class."""

    def __init__(self, classes: Sequence[PatchClass],
                 width: int | None = None, height: int | None = None):
        if not classes:
            raise ContractViolation("classifier needs at least one class")
        names = [c.name for c in classes]
        if len(set(names)) != len(names):
            raise ContractViolation("duplicate class names")
        self.classes = tuple(classes)
        self.class_names = tuple(names)
        self.width = width
        self.height = height

    def predict(self, image: ImageBuffer) -> ClassifierOutput:
        if self.width is not None and (image.width, image.height) != (self.width, self.height):
            raise ContractViolation(
                f"image {image.width}x{image.height} does not match expected "
                f"{self.width}x{self.height}"
            )
        probs: dict[str, float] = {}
        for cls in self.classes:
            x0, y0, x1, y1 = cls.region
            if x1 > image.width or y1 > image.height:
                raise ContractViolation(
                    f"region {cls.region} for class {cls.name!r} exceeds image bounds"
                )
            mean = float(image.data[y0:y1, x0:x1, :].mean())
            probs[cls.name] = float(sigmoid(cls.gain * mean + cls.bias))
        return ClassifierOutput(probs)

    def ground_truth_region(self, class_id: str) -> tuple[int, int, int, int]:
        for cls in self.classes:
            if cls.name == class_id:
                return cls.region
        raise KeyError(class_id)


@dataclass(frozen=True)
class LinearClass:
    name: str
    weights: tuple[float, ...]
    bias: float


class LinearClassifier(BaseClassifier):
    """sigmoid(w . meanPerSegment + b) against an attached segment map.

    The per-segment feature is the segment's mean intensity gated by an
    intactness flag: a segment whose pixels are all equal (per channel)
    contributes zero. Mean-filling produces exactly such flat segments, so
    for a perturbed version of a textured image the logit is an affine
    function of the mask bits with slopes weights * segment means.
    """

    def __init__(self, segmap: SegmentMap, classes: Sequence[LinearClass]):
        if not classes:
            raise ContractViolation("classifier needs at least one class")
        for cls in classes:
            if len(cls.weights) != segmap.segment_count:
                raise ContractViolation(
                    f"class {cls.name!r} has {len(cls.weights)} weights, "
                    f"segment map has {segmap.segment_count} segments"
                )
        names = [c.name for c in classes]
        if len(set(names)) != len(names):
            raise ContractViolation("duplicate class names")
        self.segmap = segmap
        self.classes = tuple(classes)
        self.class_names = tuple(names)

    def _features(self, image: ImageBuffer) -> np.ndarray:
        if (image.width, image.height) != (self.segmap.width, self.segmap.height):
            raise ContractViolation(
                f"image {image.width}x{image.height} does not match segment map "
                f"{self.segmap.width}x{self.segmap.height}"
            )
        labels = self.segmap.labels
        flat = labels.ravel()
        counts = self.segmap.segment_sizes.astype(np.float64)
        s = self.segmap.segment_count
        index = np.arange(s)
        means = np.zeros(s)
        intact = np.zeros(s, dtype=bool)
        for c in range(image.channels):
            chan = image.data[:, :, c]
            means += np.bincount(flat, weights=chan.ravel(), minlength=s) / counts
            hi = ndimage.maximum(chan, labels=labels, index=index)
            lo = ndimage.minimum(chan, labels=labels, index=index)
            intact |= np.asarray(hi) > np.asarray(lo)
        means /= image.channels
        return means * intact

    def predict(self, image: ImageBuffer) -> ClassifierOutput:
        feats = self._features(image)
        probs: dict[str, float] = {}
        for cls in self.classes:
            z = float(np.dot(np.asarray(cls.weights), feats) + cls.bias)
            probs[cls.name] = float(sigmoid(z))
        return ClassifierOutput(probs)

    def mask_affine_response(self, class_id: str, mask: MaskVector) -> float:
        """Closed-form affine response bias + w . mask.

        This is the linear surface a surrogate fitted on mask/response pairs
        should recover exactly; callers choose weights and bias that keep the
        value inside [0, 1] when using it as a probability-style response.
        """
        cls = self._class(class_id)
        if len(mask) != self.segmap.segment_count:
            raise ContractViolation("mask length does not match segment count")
        return float(cls.bias + np.dot(np.asarray(cls.weights), mask.bits))

    def _class(self, class_id: str) -> LinearClass:
        for cls in self.classes:
            if cls.name == class_id:
                return cls
        raise KeyError(class_id)


class FunctionClassifier(BaseClassifier):
    """Wraps an arbitrary pure function image -> {class: probability}. Test plumbing."""

    def __init__(self, class_names: Sequence[str], fn):
        self.class_names = tuple(class_names)
        self._fn = fn

    def predict(self, image: ImageBuffer) -> ClassifierOutput:
        return ClassifierOutput(dict(self._fn(image)))


class RemoteClassifier(BaseClassifier):
    """HTTP/1.1 JSON client for an external classifier service.

    POST /v1/predict with {"id", "width", "height", "channels", "pixels_b64",
    "classes"} where pixels_b64 is the base64 of row-major float32
    little-endian intensities; expects {"id", "probs", "model_id"} back.
    Transport failures and 5xx responses are retried, then surfaced with the
    request id.
    """

    def __init__(self, url: str, class_names: Sequence[str] | None = None,
                 timeout: float = 10.0, retries: int = 2, retry_wait: float = 0.2):
        import requests

        self.url = url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.retry_wait = retry_wait
        self._session = requests.Session()
        self._counter = 0
        if class_names is None:
            info = self.health()
            class_names = info.get("classes", [])
            if not class_names:
                raise RemoteClassifierError("service reports no classes", "health")
        self.class_names = tuple(class_names)

    def health(self) -> dict:
        import requests

        try:
            resp = self._session.get(f"{self.url}/v1/health", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise RemoteClassifierError(f"health check failed: {exc}", "health") from exc

    def predict(self, image: ImageBuffer) -> ClassifierOutput:
        import requests

        self._counter += 1
        request_id = f"req-{self._counter:08d}"
        payload = {
            "id": request_id,
            "width": image.width,
            "height": image.height,
            "channels": image.channels,
            "pixels_b64": base64.b64encode(
                image.data.astype("<f4").tobytes()).decode("ascii"),
            "classes": list(self.class_names),
        }
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(f"{self.url}/v1/predict", json=payload,
                                          timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
            else:
                if resp.status_code == 200:
                    body = resp.json()
                    if body.get("id") != request_id:
                        raise RemoteClassifierError(
                            f"response id {body.get('id')!r} does not match", request_id)
                    probs = body.get("probs", {})
                    missing = [c for c in self.class_names if c not in probs]
                    if missing:
                        raise RemoteClassifierError(
                            f"response missing classes {missing}", request_id)
                    return ClassifierOutput({c: float(probs[c]) for c in self.class_names})
                if resp.status_code < 500:
                    message = _error_message(resp)
                    raise RemoteClassifierError(
                        f"request rejected ({resp.status_code}): {message}", request_id)
                last_error = ClassifierError(
                    f"server error {resp.status_code}: {_error_message(resp)}")
            if attempt < self.retries:
                time.sleep(self.retry_wait)
        raise RemoteClassifierError(f"transport failed after {self.retries + 1} "
                                    f"attempts: {last_error}", request_id)


def _error_message(resp) -> str:
    try:
        return str(resp.json().get("error", resp.text))
    except ValueError:
        return resp.text


def predict_batch(h: BaseClassifier, images: Sequence[ImageBuffer]) -> list[ClassifierOutput]:
    return h.predict_batch(images)


def top_k_classes(out: ClassifierOutput, k: int) -> list[str]:
    """Top k class ids by descending probability; ties break lexicographically.

    k larger than the class count returns all classes.
    """
    if k < 1:
        raise ContractViolation("k must be >= 1")
    ranked = sorted(out.probabilities, key=lambda name: (-out.probabilities[name], name))
    return ranked[:k]


@dataclass(frozen=True)
class ThresholdTable:
    """Per-class confidence thresholds in [0, 1]."""

    thresholds: Mapping[str, float]

    def __post_init__(self) -> None:
        table = dict(self.thresholds)
        for name, value in table.items():
            if not 0.0 <= value <= 1.0:
                raise ContractViolation(f"threshold for {name!r} must be in [0, 1]")
        object.__setattr__(self, "thresholds", table)

    def get(self, class_id: str, default: float | None = None) -> float:
        if class_id in self.thresholds:
            return self.thresholds[class_id]
        if default is None:
            raise KeyError(class_id)
        return default

    def save(self, path: str | Path) -> None:
        from .dataio import atomic_write_text

        atomic_write_text(path, json.dumps(dict(self.thresholds), indent=2,
                                           sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "ThresholdTable":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ContractViolation(f"{path}: threshold table must be a JSON object")
        return cls({str(k): float(v) for k, v in data.items()})


def calibrate_thresholds(
    h: BaseClassifier,
    calibration_set: Sequence[tuple[ImageBuffer, Iterable[str]]],
) -> ThresholdTable:
    """Per-class mean probability over correctly detected calibration samples.

    A sample counts toward class c when c is among its true labels and the
    predicted probability of c exceeds 0.5. Classes with no qualifying sample
    fall back to 0.5 with a warning.
    """
    if not calibration_set:
        raise ContractViolation("calibration set must be non-empty")
    qualifying: dict[str, list[float]] = {name: [] for name in h.class_names}
    for image, labels in calibration_set:
        out = h.predict(image)
        for label in labels:
            if label not in qualifying:
                continue
            p = out.probabilities[label]
            if p > 0.5:
                qualifying[label].append(p)
    table: dict[str, float] = {}
    for name in h.class_names:
        probs = qualifying[name]
        if not probs:
            warnings.warn(
                f"class {name!r} has no correctly detected calibration sample; "
                "threshold falls back to 0.5",
                stacklevel=2,
            )
            table[name] = 0.5
        else:
            # summing in sorted order keeps the mean bit-identical under
            # permutations of the calibration set
            table[name] = float(sum(sorted(probs)) / len(probs))
    return ThresholdTable(table)


def load_classifier_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        config = json.load(fh)
    if not isinstance(config, dict) or "kind" not in config:
        raise ContractViolation(f"{path}: classifier config must be an object with 'kind'")
    return config


def classifier_from_config(config: dict, segmap: SegmentMap | None = None) -> BaseClassifier:
    """Build a builtin classifier from its JSON configuration dict."""
    kind = config.get("kind")
    if kind == "patch":
        classes = [
            PatchClass(name=c["name"], region=tuple(int(v) for v in c["region"]),
                       gain=float(c["gain"]), bias=float(c["bias"]))
            for c in config.get("classes", [])
        ]
        return PatchClassifier(classes, width=config.get("width"),
                               height=config.get("height"))
    if kind == "linear":
        if segmap is None:
            segmap_path = config.get("segmap")
            if segmap_path is None:
                raise ContractViolation("linear classifier config needs a 'segmap' path")
            from .segmentation import load_precomputed

            segmap = load_precomputed(segmap_path)
        classes = [
            LinearClass(name=c["name"], weights=tuple(float(v) for v in c["weights"]),
                        bias=float(c["bias"]))
            for c in config.get("classes", [])
        ]
        return LinearClassifier(segmap, classes)
    raise ContractViolation(f"unknown classifier kind {kind!r}")
