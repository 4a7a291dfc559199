"""Reference classifier service implementing the wire protocol in PROTOCOL.md.

Two modes:

* mirror-patch: per-class probability sigmoid(gain * mean(region) + bias)
  over a fixed rectangle, computed from the decoded float32 payload exactly
  as received (no re-normalization), so an in-process patch classifier and
  this service agree to float32 transport granularity.
* custom-model: per-class probability sigmoid(w . pixels + bias) with a flat
  per-pixel weight vector loaded from a JSON model file.

All request validation is manual and every rejection is a 400 with a JSON
error body; requests are stateless and responses are pure functions of the
request body.
"""
from __future__ import annotations

import base64
import binascii
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

__all__ = ["BridgeConfig", "PatchSpec", "create_app", "load_bridge_config"]


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class PatchSpec:
    name: str
    region: tuple[int, int, int, int]
    gain: float
    bias: float


@dataclass(frozen=True)
class BridgeConfig:
    host: str = "127.0.0.1"
    port: int = 8700
    mode: str = "mirror-patch"
    width: int | None = None
    height: int | None = None
    patches: tuple[PatchSpec, ...] = ()
    model_path: str | None = None

    def __post_init__(self) -> None:
        if not 0 < self.port < 65536:
            raise ValueError(f"invalid port {self.port}")
        if self.mode not in ("mirror-patch", "custom-model"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "mirror-patch" and not self.patches:
            raise ValueError("mirror-patch mode needs at least one class")
        if self.mode == "custom-model" and not self.model_path:
            raise ValueError("custom-model mode needs a model path")


def load_bridge_config(path: str | Path) -> BridgeConfig:
    """Read the bridge JSON config; the classifier block uses the engine's
    patch-classifier schema (name/region/gain/bias per class)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    classifier = raw.get("classifier", {})
    patches = tuple(
        PatchSpec(name=c["name"], region=tuple(int(v) for v in c["region"]),
                  gain=float(c["gain"]), bias=float(c["bias"]))
        for c in classifier.get("classes", [])
    )
    return BridgeConfig(
        host=raw.get("host", "127.0.0.1"),
        port=int(raw.get("port", 8700)),
        mode=raw.get("mode", "mirror-patch"),
        width=classifier.get("width"),
        height=classifier.get("height"),
        patches=patches,
        model_path=raw.get("model_path"),
    )


class _MirrorPatchModel:
    model_id = "mirror-patch"

    def __init__(self, config: BridgeConfig):
        self.patches = {p.name: p for p in config.patches}
        self.class_names = [p.name for p in config.patches]
        self.width = config.width
        self.height = config.height

    def validate_geometry(self, width: int, height: int) -> str | None:
        if self.width is not None and (width, height) != (self.width, self.height):
            return (f"image {width}x{height} does not match expected "
                    f"{self.width}x{self.height}")
        for patch in self.patches.values():
            x0, y0, x1, y1 = patch.region
            if x1 > width or y1 > height:
                return f"region {patch.region} exceeds image bounds {width}x{height}"
        return None

    def predict(self, pixels: np.ndarray, classes: Sequence[str]) -> dict[str, float]:
        probs = {}
        for name in classes:
            patch = self.patches[name]
            x0, y0, x1, y1 = patch.region
            mean = float(pixels[y0:y1, x0:x1, :].mean())
            probs[name] = _sigmoid(patch.gain * mean + patch.bias)
        return probs


class _CustomModel:
    model_id = "custom-model"

    def __init__(self, config: BridgeConfig):
        with open(config.model_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        self.classes = {
            c["name"]: (np.asarray(c["pixel_weights"], dtype=np.float64),
                        float(c["bias"]))
            for c in raw["classes"]
        }
        self.class_names = [c["name"] for c in raw["classes"]]
        self.width = raw.get("width")
        self.height = raw.get("height")

    def validate_geometry(self, width: int, height: int) -> str | None:
        if self.width is not None and (width, height) != (self.width, self.height):
            return (f"image {width}x{height} does not match expected "
                    f"{self.width}x{self.height}")
        return None

    def predict(self, pixels: np.ndarray, classes: Sequence[str]) -> dict[str, float]:
        flat = pixels.ravel()
        probs = {}
        for name in classes:
            weights, bias = self.classes[name]
            if weights.size != flat.size:
                raise ValueError(
                    f"model for {name!r} expects {weights.size} pixels, got {flat.size}")
            probs[name] = _sigmoid(float(weights @ flat) + bias)
        return probs


def create_app(config: BridgeConfig) -> FastAPI:
    model = (_MirrorPatchModel(config) if config.mode == "mirror-patch"
             else _CustomModel(config))
    app = FastAPI(title="mindful-bridge", docs_url=None, redoc_url=None)

    @app.get("/v1/health")
    async def health():
        return {"status": "ok", "classes": list(model.class_names)}

    @app.post("/v1/predict")
    async def predict(request: Request):
        def reject(request_id, message):
            return JSONResponse({"id": request_id, "error": message},
                                status_code=400)

        try:
            body = await request.json()
        except Exception:
            return reject(None, "malformed JSON body")
        if not isinstance(body, dict):
            return reject(None, "request body must be a JSON object")
        request_id = body.get("id")
        if not isinstance(request_id, str) or not request_id:
            return reject(None, "missing or invalid 'id'")
        for key in ("width", "height", "channels"):
            if not isinstance(body.get(key), int) or body[key] < 1:
                return reject(request_id, f"missing or invalid '{key}'")
        width, height, channels = body["width"], body["height"], body["channels"]
        if channels not in (1, 3):
            return reject(request_id, "'channels' must be 1 or 3")
        classes = body.get("classes")
        if (not isinstance(classes, list) or not classes
                or not all(isinstance(c, str) for c in classes)):
            return reject(request_id, "missing or invalid 'classes'")
        unknown = [c for c in classes if c not in model.class_names]
        if unknown:
            return reject(request_id, f"unknown class {unknown[0]!r}")
        encoded = body.get("pixels_b64")
        if not isinstance(encoded, str):
            return reject(request_id, "missing or invalid 'pixels_b64'")
        try:
            raw = base64.b64decode(encoded, validate=True)
        except (binascii.Error, ValueError):
            return reject(request_id, "'pixels_b64' is not valid base64")
        expected = width * height * channels * 4
        if len(raw) != expected:
            return reject(request_id,
                          f"pixel payload is {len(raw)} bytes, expected {expected}")
        geometry_error = model.validate_geometry(width, height)
        if geometry_error:
            return reject(request_id, geometry_error)
        pixels = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        pixels = pixels.reshape(height, width, channels)
        try:
            probs = model.predict(pixels, classes)
        except ValueError as exc:
            return reject(request_id, str(exc))
        return {"id": request_id, "probs": probs, "model_id": model.model_id}

    return app
