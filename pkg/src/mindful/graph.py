"""Region adjacency graph over superpixels.

Vertices are superpixel labels; an undirected edge joins two superpixels
whenever some pixel of one is 4-connected to a pixel of the other. Graphs
are immutable values; removal operations return new graphs. All traversal
orders are canonical (ascending label) so downstream sampling is
deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import ContractViolation, SegmentMap

__all__ = ["AdjacencyGraph", "build_graph", "remove_vertex", "incident_edges", "dump_edges"]

Edge = tuple[int, int]


@dataclass(frozen=True, eq=True)
class AdjacencyGraph:
    """Undirected graph with sorted vertex list and (lo, hi)-normalized edge set."""

    vertices: tuple[int, ...]
    edges: frozenset[Edge]

    def __post_init__(self) -> None:
        if list(self.vertices) != sorted(set(self.vertices)):
            raise ContractViolation("vertex list must be strictly ascending")
        present = set(self.vertices)
        for a, b in self.edges:
            if a == b:
                raise ContractViolation(f"self-loop on vertex {a}")
            if a > b:
                raise ContractViolation(f"edge ({a}, {b}) not normalized as (lo, hi)")
            if a not in present or b not in present:
                raise ContractViolation(f"edge ({a}, {b}) references a missing vertex")

    @cached_property
    def neighbors(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        return {v: tuple(sorted(ns)) for v, ns in adj.items()}

    def degree(self, v: int) -> int:
        return len(self.neighbors[v])

    def __contains__(self, v: int) -> bool:
        return v in self.neighbors


def build_graph(segmap: SegmentMap) -> AdjacencyGraph:
    """Adjacency from 4-connectivity: an edge per pair of labels that touch side-on."""
    labels = segmap.labels
    pairs = []
    horiz = labels[:, :-1] != labels[:, 1:]
    if horiz.any():
        pairs.append(np.stack([labels[:, :-1][horiz], labels[:, 1:][horiz]], axis=1))
    vert = labels[:-1, :] != labels[1:, :]
    if vert.any():
        pairs.append(np.stack([labels[:-1, :][vert], labels[1:, :][vert]], axis=1))
    edges: frozenset[Edge]
    if pairs:
        stacked = np.concatenate(pairs, axis=0)
        lo = np.minimum(stacked[:, 0], stacked[:, 1])
        hi = np.maximum(stacked[:, 0], stacked[:, 1])
        uniq = np.unique(np.stack([lo, hi], axis=1), axis=0)
        edges = frozenset((int(a), int(b)) for a, b in uniq)
    else:
        edges = frozenset()
    return AdjacencyGraph(vertices=tuple(range(segmap.segment_count)), edges=edges)


def remove_vertex(g: AdjacencyGraph, v: int) -> AdjacencyGraph:
    """Drop v and every edge incident to it."""
    if v not in g:
        raise ContractViolation(f"vertex {v} not present")
    return AdjacencyGraph(
        vertices=tuple(u for u in g.vertices if u != v),
        edges=frozenset(e for e in g.edges if v not in e),
    )


def incident_edges(g: AdjacencyGraph, v: int) -> list[Edge]:
    """Edges containing v, each normalized as (v, other), ascending by other."""
    if v not in g:
        raise ContractViolation(f"vertex {v} not present")
    return [(v, other) for other in g.neighbors[v]]


def dump_edges(g: AdjacencyGraph) -> str:
    """Debug dump: one `v_i v_j` line per edge, sorted."""
    return "\n".join(f"{a} {b}" for a, b in sorted(g.edges)) + ("\n" if g.edges else "")
