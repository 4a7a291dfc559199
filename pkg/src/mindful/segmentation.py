"""Superpixel segmentation: SLIC, Felzenszwalb, and precomputed-map ingestion.

Both segmenters are deterministic: SLIC uses grid-seeded centers, a fixed
iteration count and lowest-index tie-breaking; Felzenszwalb processes edges
in a stable ascending-weight order. Every produced map is a full partition
with contiguous labels and spatially connected regions (SLIC runs an
explicit connectivity post-pass).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import csgraph

from .core import ContractViolation, ImageBuffer, SegmentMap

__all__ = [
    "SlicParams",
    "FelzenszwalbParams",
    "SegmenterConfig",
    "segment_slic",
    "segment_felzenszwalb",
    "load_precomputed",
    "save_precomputed",
    "segment_image",
]


@dataclass(frozen=True)
class SlicParams:
    n_segments: int = 50
    compactness: float = 80.0
    sigma: float = 20.0

    def __post_init__(self) -> None:
        if self.n_segments < 1:
            raise ContractViolation("n_segments must be >= 1")
        if self.compactness <= 0:
            raise ContractViolation("compactness must be positive")
        if self.sigma < 0:
            raise ContractViolation("sigma must be non-negative")


@dataclass(frozen=True)
class FelzenszwalbParams:
    scale: float = 600.0
    min_size: int = 200
    sigma: float = 0.2

    def __post_init__(self) -> None:
        if self.scale <= 0:
            raise ContractViolation("scale must be positive")
        if self.min_size < 1:
            raise ContractViolation("min_size must be >= 1")
        if self.sigma < 0:
            raise ContractViolation("sigma must be non-negative")


@dataclass(frozen=True)
class SegmenterConfig:
    algorithm: str = "slic"
    slic: SlicParams = field(default_factory=SlicParams)
    felzenszwalb: FelzenszwalbParams = field(default_factory=FelzenszwalbParams)

    def __post_init__(self) -> None:
        if self.algorithm not in ("slic", "felzenszwalb", "precomputed"):
            raise ContractViolation(f"unknown segmentation algorithm {self.algorithm!r}")


def _blurred(image: ImageBuffer, sigma: float) -> np.ndarray:
    """Per-channel Gaussian blur; returns (H, W, C) float64."""
    if sigma <= 0:
        return np.asarray(image.data, dtype=np.float64)
    out = np.empty_like(image.data)
    for c in range(image.channels):
        out[:, :, c] = ndimage.gaussian_filter(image.data[:, :, c], sigma=sigma,
                                               mode="reflect")
    return out


def _pixel_components(labels: np.ndarray) -> tuple[int, np.ndarray]:
    """Connected components (4-connectivity) of equal-label pixels."""
    h, w = labels.shape
    n = h * w
    idx = np.arange(n).reshape(h, w)
    rows = []
    cols = []
    same_h = labels[:, :-1] == labels[:, 1:]
    rows.append(idx[:, :-1][same_h])
    cols.append(idx[:, 1:][same_h])
    same_v = labels[:-1, :] == labels[1:, :]
    rows.append(idx[:-1, :][same_v])
    cols.append(idx[1:, :][same_v])
    row = np.concatenate(rows)
    col = np.concatenate(cols)
    adj = sparse.coo_matrix((np.ones(row.size, dtype=np.int8), (row, col)), shape=(n, n))
    count, comp = csgraph.connected_components(adj, directed=False)
    return count, comp


def _enforce_connectivity(labels: np.ndarray) -> np.ndarray:
    """Relabel disconnected fragments into their largest adjacent segment.

    Per label, the largest component keeps the label; every other fragment is
    absorbed by the adjacent label with the largest current pixel count (ties
    to the smallest label). Repeats until every label region is connected.
    """
    labels = labels.copy()
    h, w = labels.shape
    for _ in range(100):
        count, comp = _pixel_components(labels)
        comp = comp.reshape(h, w)
        comp_sizes = np.bincount(comp.ravel(), minlength=count)
        fragments: list[tuple[int, int]] = []  # (first pixel index, component id)
        keeper: dict[int, int] = {}
        first_pixel = np.full(count, np.iinfo(np.int64).max)
        np.minimum.at(first_pixel, comp.ravel(), np.arange(h * w))
        for comp_id in range(count):
            label = int(labels.ravel()[first_pixel[comp_id]])
            best = keeper.get(label)
            if best is None:
                keeper[label] = comp_id
            else:
                # larger component wins; ties to the earlier (smaller id) one
                if (comp_sizes[comp_id], -comp_id) > (comp_sizes[best], -best):
                    keeper[label] = comp_id
        keep_ids = set(keeper.values())
        for comp_id in range(count):
            if comp_id not in keep_ids:
                fragments.append((int(first_pixel[comp_id]), comp_id))
        if not fragments:
            return labels
        fragments.sort()
        label_sizes = np.bincount(labels.ravel()).astype(np.int64)
        for _, comp_id in fragments:
            member = comp == comp_id
            neighbor_labels = _adjacent_labels(labels, member)
            if neighbor_labels.size == 0:
                continue  # whole image is one fragment; nothing to merge into
            counts = label_sizes[neighbor_labels]
            best = neighbor_labels[np.lexsort((neighbor_labels, -counts))][0]
            size = int(member.sum())
            old = int(labels[member][0])
            labels[member] = best
            label_sizes[old] -= size
            label_sizes[best] += size
    raise RuntimeError("connectivity enforcement did not converge")


def _adjacent_labels(labels: np.ndarray, member: np.ndarray) -> np.ndarray:
    """Distinct labels of pixels 4-adjacent to the member region, excluding it."""
    neighbor = np.zeros_like(member)
    neighbor[:-1, :] |= member[1:, :]
    neighbor[1:, :] |= member[:-1, :]
    neighbor[:, :-1] |= member[:, 1:]
    neighbor[:, 1:] |= member[:, :-1]
    neighbor &= ~member
    return np.unique(labels[neighbor])


def _compress_labels(labels: np.ndarray) -> np.ndarray:
    """Relabel to contiguous ids ordered by first occurrence in row-major scan."""
    flat = labels.ravel()
    _, first = np.unique(flat, return_index=True)
    order = flat[np.sort(first)]
    mapping = np.empty(int(flat.max()) + 1, dtype=np.int64)
    mapping[order] = np.arange(order.size)
    return mapping[flat].reshape(labels.shape)


def segment_slic(image: ImageBuffer, cfg: SegmenterConfig) -> SegmentMap:
    """Grid-seeded k-means over (color, position) with 10 fixed iterations.

    Distance is sqrt(d_color^2 + (compactness / grid_step)^2 * d_xy^2) with
    grid_step = sqrt(pixel_count / n_segments). Yields between 1 and
    2 * n_segments connected segments.
    """
    if cfg.algorithm != "slic":
        raise ContractViolation("config algorithm is not 'slic'")
    p = cfg.slic
    h, w = image.height, image.width
    n = h * w
    if p.n_segments > n:
        raise ContractViolation(f"n_segments={p.n_segments} exceeds pixel count {n}")
    img = _blurred(image, p.sigma)
    step = math.sqrt(n / p.n_segments)
    ny = max(1, round(h / step))
    nx = max(1, round(w / step))
    while ny * nx > 2 * p.n_segments:
        if ny >= nx and ny > 1:
            ny -= 1
        elif nx > 1:
            nx -= 1
        else:
            break
    k = ny * nx
    cy = (np.arange(ny) + 0.5) * h / ny
    cx = (np.arange(nx) + 0.5) * w / nx
    centers_y = np.repeat(cy, nx)
    centers_x = np.tile(cx, ny)
    ys = np.clip(np.round(centers_y - 0.5).astype(int), 0, h - 1)
    xs = np.clip(np.round(centers_x - 0.5).astype(int), 0, w - 1)
    centers_color = img[ys, xs, :].astype(np.float64)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    flat_color = img.reshape(n, image.channels)
    spatial_scale = (p.compactness / step) ** 2
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(10):
        best = np.full(n, np.inf)
        for ci in range(k):
            d_color = ((flat_color - centers_color[ci]) ** 2).sum(axis=1)
            d_xy = (yy - centers_y[ci]) ** 2 + (xx - centers_x[ci]) ** 2
            dist = d_color + spatial_scale * d_xy.ravel()
            better = dist < best  # strict: ties keep the lower center index
            labels[better] = ci
            best[better] = dist[better]
        counts = np.bincount(labels, minlength=k).astype(np.float64)
        occupied = counts > 0
        for c in range(image.channels):
            sums = np.bincount(labels, weights=flat_color[:, c], minlength=k)
            centers_color[occupied, c] = sums[occupied] / counts[occupied]
        sums_y = np.bincount(labels, weights=yy.ravel(), minlength=k)
        sums_x = np.bincount(labels, weights=xx.ravel(), minlength=k)
        centers_y[occupied] = sums_y[occupied] / counts[occupied]
        centers_x[occupied] = sums_x[occupied] / counts[occupied]

    grid = _compress_labels(labels.reshape(h, w))
    grid = _enforce_connectivity(grid)
    grid = _compress_labels(grid)
    return SegmentMap.from_labels(grid)


def _felzenszwalb_edges(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """8-connected pixel graph in pinned enumeration order (E, S, SE, SW per pixel)."""
    h, w, _ = img.shape
    idx = np.arange(h * w).reshape(h, w)

    def color_dist(a_sel, b_sel):
        diff = img[a_sel] - img[b_sel]
        return np.sqrt((diff * diff).sum(axis=-1))

    pairs_a, pairs_b, weights = [], [], []
    sel_a = (slice(None), slice(0, w - 1))
    sel_b = (slice(None), slice(1, w))
    pairs_a.append(idx[sel_a].ravel()); pairs_b.append(idx[sel_b].ravel())
    weights.append(color_dist(sel_a, sel_b).ravel())
    sel_a = (slice(0, h - 1), slice(None))
    sel_b = (slice(1, h), slice(None))
    pairs_a.append(idx[sel_a].ravel()); pairs_b.append(idx[sel_b].ravel())
    weights.append(color_dist(sel_a, sel_b).ravel())
    sel_a = (slice(0, h - 1), slice(0, w - 1))
    sel_b = (slice(1, h), slice(1, w))
    pairs_a.append(idx[sel_a].ravel()); pairs_b.append(idx[sel_b].ravel())
    weights.append(color_dist(sel_a, sel_b).ravel())
    sel_a = (slice(0, h - 1), slice(1, w))
    sel_b = (slice(1, h), slice(0, w - 1))
    pairs_a.append(idx[sel_a].ravel()); pairs_b.append(idx[sel_b].ravel())
    weights.append(color_dist(sel_a, sel_b).ravel())
    return (np.concatenate(pairs_a), np.concatenate(pairs_b), np.concatenate(weights))


class _UnionFind:
    __slots__ = ("parent", "size", "internal")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.internal = [0.0] * n

    def find(self, a: int) -> int:
        parent = self.parent
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    def union(self, ra: int, rb: int, weight: float) -> int:
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.internal[ra] = weight
        return ra


def segment_felzenszwalb(image: ImageBuffer, cfg: SegmenterConfig) -> SegmentMap:
    """Graph-based merging with threshold tau(C) = scale / |C|.

    Edges are visited in ascending weight (stable order for ties); after the
    main pass, components smaller than min_size merge along their minimum
    connecting edge, so no output segment is below min_size.
    """
    if cfg.algorithm != "felzenszwalb":
        raise ContractViolation("config algorithm is not 'felzenszwalb'")
    p = cfg.felzenszwalb
    h, w = image.height, image.width
    img = _blurred(image, p.sigma)
    ea, eb, ew = _felzenszwalb_edges(img)
    order = np.argsort(ew, kind="stable")
    ea_l = ea[order].tolist()
    eb_l = eb[order].tolist()
    ew_l = ew[order].tolist()
    uf = _UnionFind(h * w)
    scale = p.scale
    find = uf.find
    for a, b, weight in zip(ea_l, eb_l, ew_l):
        ra = find(a)
        rb = find(b)
        if ra == rb:
            continue
        if weight <= min(uf.internal[ra] + scale / uf.size[ra],
                         uf.internal[rb] + scale / uf.size[rb]):
            uf.union(ra, rb, weight)
    min_size = min(p.min_size, h * w)
    for a, b, weight in zip(ea_l, eb_l, ew_l):
        ra = find(a)
        rb = find(b)
        if ra != rb and (uf.size[ra] < min_size or uf.size[rb] < min_size):
            uf.union(ra, rb, weight)
    roots = np.fromiter((find(i) for i in range(h * w)), dtype=np.int64, count=h * w)
    labels = _compress_labels(roots.reshape(h, w))
    return SegmentMap.from_labels(labels)


def load_precomputed(path: str | Path) -> SegmentMap:
    """Read the plain-text map format: `width height` then one row per line.

    Gapped labels are closed up with a warning; negative labels are an error.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip().splitlines()
    if not text:
        raise ContractViolation(f"{path}: empty segment map file")
    try:
        w, h = (int(v) for v in text[0].split())
    except ValueError as exc:
        raise ContractViolation(f"{path}: first line must be 'width height'") from exc
    if len(text) != h + 1:
        raise ContractViolation(f"{path}: expected {h} label rows, found {len(text) - 1}")
    rows = []
    for lineno, line in enumerate(text[1:], start=2):
        try:
            row = [int(v) for v in line.split()]
        except ValueError as exc:
            raise ContractViolation(f"{path}:{lineno}: non-integer label") from exc
        if len(row) != w:
            raise ContractViolation(f"{path}:{lineno}: expected {w} labels, got {len(row)}")
        rows.append(row)
    labels = np.asarray(rows, dtype=np.int64)
    if labels.min() < 0:
        raise ContractViolation(f"{path}: negative label {int(labels.min())}")
    present = np.unique(labels)
    if present.size != labels.max() + 1:
        warnings.warn(f"{path}: labels have gaps; relabeling to contiguous ids",
                      stacklevel=2)
        labels = _compress_labels(labels)
    return SegmentMap.from_labels(labels)


def save_precomputed(segmap: SegmentMap, path: str | Path) -> None:
    from .dataio import atomic_write_text

    lines = [f"{segmap.width} {segmap.height}"]
    lines.extend(" ".join(str(int(v)) for v in row) for row in segmap.labels)
    atomic_write_text(path, "\n".join(lines) + "\n")


def segment_image(image: ImageBuffer, cfg: SegmenterConfig,
                  precomputed_path: str | Path | None = None) -> SegmentMap:
    """Dispatch on the configured algorithm; validates dimensions for precomputed maps."""
    if cfg.algorithm == "slic":
        return segment_slic(image, cfg)
    if cfg.algorithm == "felzenszwalb":
        return segment_felzenszwalb(image, cfg)
    if precomputed_path is None:
        raise ContractViolation("precomputed segmentation needs a map path")
    segmap = load_precomputed(precomputed_path)
    if (segmap.width, segmap.height) != (image.width, image.height):
        raise ContractViolation(
            f"segment map {segmap.width}x{segmap.height} does not match image "
            f"{image.width}x{image.height}"
        )
    return segmap
