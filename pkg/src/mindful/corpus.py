"""Self-contained synthetic benchmark corpus.

Generates grayscale images with bright rectangles planted at fixed per-class
locations, the matching bounding-box annotations, a positive-label list for
threshold calibration, and a patch-classifier configuration whose per-class
regions coincide with the planted rectangles. Pixel values are quantized to
8 bits at generation time so the in-memory corpus is identical to what a PNG
round-trip produces.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AnnotationSet, BoxAnnotation, ContractViolation, ImageBuffer
from .dataio import atomic_write_text, load_annotations, load_png, read_csv, \
    save_annotations, save_png, write_csv

__all__ = ["CorpusSpec", "CorpusInstance", "Corpus", "build_corpus",
           "write_corpus", "load_corpus"]

_CLASS_LAYOUT = {
    "alpha": (0.12, 0.15, 0.45, 0.45),
    "beta": (0.55, 0.50, 0.90, 0.85),
    "gamma": (0.15, 0.60, 0.45, 0.90),
}
_GAIN = 8.0
_BIAS = -4.0


@dataclass(frozen=True)
class CorpusSpec:
    count: int = 50
    width: int = 64
    height: int = 64
    seed: int = 7
    class_count: int = 2

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ContractViolation("count must be >= 1")
        if self.width < 16 or self.height < 16:
            raise ContractViolation("corpus images must be at least 16x16")
        if not 1 <= self.class_count <= len(_CLASS_LAYOUT):
            raise ContractViolation(
                f"class_count must be in [1, {len(_CLASS_LAYOUT)}]")


@dataclass(frozen=True)
class CorpusInstance:
    image_id: str
    image: ImageBuffer
    labels: tuple[str, ...]


@dataclass(frozen=True)
class Corpus:
    instances: tuple[CorpusInstance, ...]
    annotations: AnnotationSet
    classifier_config: dict


def class_regions(width: int, height: int, class_count: int) -> dict[str, tuple[int, int, int, int]]:
    regions: dict[str, tuple[int, int, int, int]] = {}
    for name, (fx0, fy0, fx1, fy1) in list(_CLASS_LAYOUT.items())[:class_count]:
        regions[name] = (round(fx0 * width), round(fy0 * height),
                         round(fx1 * width), round(fy1 * height))
    return regions


def build_corpus(spec: CorpusSpec) -> Corpus:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    regions = class_regions(spec.width, spec.height, spec.class_count)
    names = list(regions)
    instances: list[CorpusInstance] = []
    boxes: list[BoxAnnotation] = []
    for i in range(spec.count):
        arr = rng.uniform(0.05, 0.35, size=(spec.height, spec.width))
        labels = [names[i % len(names)]]
        if len(names) > 1 and i % 4 == 3:
            labels.append(names[(i + 1) % len(names)])
        for label in labels:
            x0, y0, x1, y1 = regions[label]
            arr[y0:y1, x0:x1] = rng.uniform(0.75, 1.0, size=(y1 - y0, x1 - x0))
        arr = np.round(arr * 255.0) / 255.0  # match the 8-bit PNG round-trip
        image_id = f"img_{i:03d}"
        instances.append(CorpusInstance(
            image_id=image_id,
            image=ImageBuffer.from_array(arr),
            labels=tuple(labels),
        ))
        for label in labels:
            boxes.append(BoxAnnotation(image_id, label, *regions[label]))
    config = {
        "kind": "patch",
        "width": spec.width,
        "height": spec.height,
        "classes": [
            {"name": name, "region": list(region), "gain": _GAIN, "bias": _BIAS}
            for name, region in regions.items()
        ],
    }
    return Corpus(
        instances=tuple(instances),
        annotations=AnnotationSet.from_entries(boxes),
        classifier_config=config,
    )


def write_corpus(corpus: Corpus, out_dir: str | Path, spec: CorpusSpec | None = None) -> None:
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    for inst in corpus.instances:
        save_png(inst.image, out / "images" / f"{inst.image_id}.png")
    save_annotations(corpus.annotations, out / "annotations.csv")
    write_csv(out / "labels.csv", ["image_id", "class_name"],
              [[inst.image_id, label]
               for inst in corpus.instances for label in inst.labels])
    atomic_write_text(out / "classifier.json",
                      json.dumps(corpus.classifier_config, indent=2) + "\n")
    if spec is not None:
        manifest = {"count": spec.count, "width": spec.width, "height": spec.height,
                    "seed": spec.seed, "class_count": spec.class_count}
        atomic_write_text(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")


def load_corpus(corpus_dir: str | Path) -> Corpus:
    """Read a corpus directory back: images/, labels.csv, annotations.csv, classifier.json."""
    root = Path(corpus_dir)
    if not (root / "labels.csv").exists():
        raise ContractViolation(f"{root}: not a corpus directory (labels.csv missing)")
    _, label_rows = read_csv(root / "labels.csv")
    labels_by_image: dict[str, list[str]] = {}
    for row in label_rows:
        labels_by_image.setdefault(row["image_id"], []).append(row["class_name"])
    instances = []
    for image_id in sorted(labels_by_image):
        image = load_png(root / "images" / f"{image_id}.png")
        instances.append(CorpusInstance(
            image_id=image_id, image=image,
            labels=tuple(labels_by_image[image_id]),
        ))
    annotations = load_annotations(root / "annotations.csv")
    with open(root / "classifier.json", encoding="utf-8") as fh:
        config = json.load(fh)
    return Corpus(instances=tuple(instances), annotations=annotations,
                  classifier_config=config)
