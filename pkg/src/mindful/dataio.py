"""File ingestion and emission: PNG images, annotation CSV, atomic writes, CSV helpers."""
from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image as PILImage

from .core import AnnotationSet, BoxAnnotation, ContractViolation, ImageBuffer

ANNOTATION_HEADER = ["image_id", "class_name", "x_min", "y_min", "x_max", "y_max"]


def load_png(path: str | Path) -> ImageBuffer:
    """Load an 8-bit grayscale or RGB PNG, normalizing intensities to [0, 1]."""
    with PILImage.open(path) as im:
        if im.mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
            return ImageBuffer.from_array(arr)
        if im.mode == "RGB":
            arr = np.asarray(im, dtype=np.float64) / 255.0
            return ImageBuffer.from_array(arr)
        raise ContractViolation(
            f"unsupported PNG mode {im.mode!r} in {path}; expected 8-bit L or RGB"
        )


def save_png(image: ImageBuffer, path: str | Path) -> None:
    arr = np.round(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        pil = PILImage.fromarray(arr[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(arr, mode="RGB")
    with _atomic_open(path, "wb") as fh:
        pil.save(fh, format="PNG")


def load_annotations(path: str | Path) -> AnnotationSet:
    """Read the bounding-box CSV (header image_id,class_name,x_min,y_min,x_max,y_max)."""
    entries: list[BoxAnnotation] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ANNOTATION_HEADER:
            raise ContractViolation(
                f"bad annotation header in {path}: {header!r}, expected {ANNOTATION_HEADER}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ContractViolation(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            image_id, class_name = row[0], row[1]
            try:
                coords = [int(v) for v in row[2:]]
            except ValueError as exc:
                raise ContractViolation(f"{path}:{lineno}: non-integer coordinate") from exc
            entries.append(BoxAnnotation(image_id, class_name, *coords))
    return AnnotationSet.from_entries(entries)


def save_annotations(ann: AnnotationSet, path: str | Path) -> None:
    rows = [[e.image_id, e.class_id, e.x_min, e.y_min, e.x_max, e.y_max]
            for e in ann.entries]
    write_csv(path, ANNOTATION_HEADER, rows)


def write_csv(path: str | Path, header: Sequence[str],
              rows: Iterable[Sequence[object]]) -> None:
    """RFC-4180 CSV (CRLF line endings), written atomically."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(list(header))
    for row in rows:
        writer.writerow(list(row))
    atomic_write_text(path, buf.getvalue())


def read_csv(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Read a CSV produced by write_csv back into dict rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ContractViolation(f"{path}: missing CSV header")
        return list(reader.fieldnames), [dict(row) for row in reader]


def _atomic_open(path: str | Path, mode: str):
    """Open a temp file in the target directory; rename over path on clean close."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")

    class _Handle:
        def __init__(self):
            self._fh = os.fdopen(fd, mode)

        def __enter__(self):
            return self._fh

        def __exit__(self, exc_type, exc, tb):
            self._fh.close()
            if exc_type is None:
                os.replace(tmp, path)
            else:
                os.unlink(tmp)
            return False

    return _Handle()


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    with _atomic_open(path, "wb") as fh:
        fh.write(data)
