"""Graph-guided deterministic perturbation sampling.

Generation runs in two phases over the region adjacency graph. Phase one
tries every single-superpixel deactivation in ascending vertex order; a
candidate is kept only when the classifier stays confident about the target
class (strictly above the per-class threshold), otherwise the vertex and its
edges are pruned from the working graph. Phase two walks the accepted
samples in table order and grows each one along untried incident edges of
its frontier vertex, deactivating one adjacent superpixel per expansion,
until every sample is processed or the level cap stops further growth.

Everything is ordered canonically, so with a pure classifier the generated
table is byte-identical across runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .classifier import BaseClassifier
from .core import ContractViolation, ImageBuffer, MaskVector, SegmentFiller, SegmentMap
from .graph import AdjacencyGraph, build_graph, incident_edges, remove_vertex

__all__ = [
    "SampleRecord",
    "SampleTable",
    "MindfulConfig",
    "decision_module",
    "generate_phase1",
    "generate_phase2",
    "generate",
]

Edge = tuple[int, int]


@dataclass
class SampleRecord:
    """One generated sample: the edge path that produced it, its mask, and
    whether its frontier has been expanded yet. The first path edge is a
    self-pair (v, v); the mask is 0 exactly at the vertices named in the path.
    """

    path: tuple[Edge, ...]
    mask: MaskVector
    processed: bool

    def path_vertices(self) -> set[int]:
        return {v for edge in self.path for v in edge}

    def frontier(self) -> int:
        return self.path[-1][1]

    def to_json(self) -> str:
        return json.dumps(
            {"path": [list(e) for e in self.path],
             "mask": [int(b) for b in self.mask.bits],
             "processed": self.processed},
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        obj = json.loads(line)
        return cls(path=tuple((int(a), int(b)) for a, b in obj["path"]),
                   mask=MaskVector.from_bits(obj["mask"]),
                   processed=bool(obj["processed"]))


class SampleTable:
    """Append-only, deterministically ordered table of generated samples.

    Alongside each record the table keeps the classifier probability observed
    for the target class when the record was accepted, so the surrogate can
    reuse it instead of re-querying the classifier. Responses are an
    in-memory cache only; they are not part of the serialized form.
    """

    def __init__(self) -> None:
        self.records: list[SampleRecord] = []
        self.responses: list[float] = []
        self._paths: set[tuple[Edge, ...]] = set()

    def append(self, record: SampleRecord, response: float) -> None:
        if record.path in self._paths:
            raise ContractViolation(f"duplicate path {record.path}")
        self.records.append(record)
        self.responses.append(response)
        self._paths.add(record.path)

    def masks(self) -> list[MaskVector]:
        return [r.mask for r in self.records]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def to_jsonl(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.records)

    def save(self, path: str | Path) -> None:
        from .dataio import atomic_write_text

        atomic_write_text(path, self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "SampleTable":
        table = cls()
        for line in text.splitlines():
            if line.strip():
                table.append(SampleRecord.from_json(line), response=float("nan"))
        return table

    @classmethod
    def load(cls, path: str | Path) -> "SampleTable":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class MindfulConfig:
    """Level cap, per-class confidence threshold, and duplicate-mask handling.

    max_level is the maximum number of deactivated superpixels per sample;
    phase one emits one-zero masks and each expansion adds at most one zero.
    Duplicate masks reached over different paths are kept by default (they
    act as implicit sample weights); dedupe_masks collapses them before
    surrogate fitting.
    """

    threshold: float
    max_level: int = 2
    dedupe_masks: bool = False

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ContractViolation("threshold must be in [0, 1]")
        if self.max_level < 1:
            raise ContractViolation("max_level must be >= 1")


def decision_module(h: BaseClassifier, sample_image: ImageBuffer, class_id: str,
                    threshold: float) -> bool:
    """Keep a sample iff the target-class probability strictly exceeds the threshold."""
    return _decide(h, sample_image, class_id, threshold)[0]


def _decide(h: BaseClassifier, sample_image: ImageBuffer, class_id: str,
            threshold: float) -> tuple[bool, float]:
    if not 0.0 <= threshold <= 1.0:
        raise ContractViolation("threshold must be in [0, 1]")
    out = h.predict(sample_image)
    if class_id not in out.probabilities:
        raise ContractViolation(f"class {class_id!r} unknown to classifier")
    p = out.probabilities[class_id]
    return p > threshold, p


def generate_phase1(
    g: AdjacencyGraph,
    image: ImageBuffer,
    segmap: SegmentMap,
    class_id: str,
    h: BaseClassifier,
    cfg: MindfulConfig,
) -> tuple[SampleTable, AdjacencyGraph]:
    """Single-deactivation pass: accept into the table or prune from the graph."""
    if g.vertices and not (0 <= g.vertices[0] and g.vertices[-1] < segmap.segment_count):
        raise ContractViolation(
            f"graph vertices must lie in [0, {segmap.segment_count})")
    filler = SegmentFiller(image, segmap)
    table = SampleTable()
    pruned = g
    for v in g.vertices:
        bits = np.ones(segmap.segment_count, dtype=np.uint8)
        bits[v] = 0
        mask = MaskVector(bits)
        keep, response = _decide(h, filler.apply(mask), class_id, cfg.threshold)
        if keep:
            table.append(SampleRecord(path=((v, v),), mask=mask, processed=False),
                         response=response)
        else:
            pruned = remove_vertex(pruned, v)
    return table, pruned


def generate_phase2(
    table: SampleTable,
    pruned: AdjacencyGraph,
    image: ImageBuffer,
    segmap: SegmentMap,
    class_id: str,
    h: BaseClassifier,
    cfg: MindfulConfig,
) -> SampleTable:
    """Frontier expansion pass over the pruned graph.

    Each unprocessed record expands along the incident edges of the second
    vertex of its last path edge, skipping edges already on its path and
    children that would exceed the level cap. Appended edges are normalized
    as (frontier, newly deactivated vertex) so the frontier always advances.
    """
    filler = SegmentFiller(image, segmap)
    i = 0
    while i < len(table.records):
        record = table.records[i]
        if not record.processed:
            v = record.frontier()
            visited_edges = {(min(a, b), max(a, b)) for a, b in record.path}
            deactivated = record.path_vertices()
            for _, other in incident_edges(pruned, v):
                key = (min(v, other), max(v, other))
                if key in visited_edges:
                    continue
                child_level = len(deactivated | {other})
                if child_level > cfg.max_level:
                    continue
                bits = record.mask.bits.copy()
                bits[v] = 0
                bits[other] = 0
                child_mask = MaskVector(bits)
                keep, response = _decide(h, filler.apply(child_mask), class_id,
                                         cfg.threshold)
                if keep:
                    table.append(
                        SampleRecord(path=record.path + ((v, other),),
                                     mask=child_mask, processed=False),
                        response=response,
                    )
            record.processed = True
        i += 1
    return table


def generate(
    image: ImageBuffer,
    segmap: SegmentMap,
    class_id: str,
    h: BaseClassifier,
    cfg: MindfulConfig,
    graph: AdjacencyGraph | None = None,
) -> SampleTable:
    """Run both phases; identical inputs yield an identical table."""
    if graph is None:
        graph = build_graph(segmap)
    table, pruned = generate_phase1(graph, image, segmap, class_id, h, cfg)
    return generate_phase2(table, pruned, image, segmap, class_id, h, cfg)
