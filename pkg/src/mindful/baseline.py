"""Random-perturbation baseline sampler.

Masks are drawn i.i.d. Bernoulli per superpixel from a seeded PCG64
generator (numpy's default 64-bit generator), with the unperturbed all-ones
instance always at index 0. The generator algorithm is pinned so other
implementations can replicate mask streams: entry (i, s) of the random block
is 1 iff the (i * segment_count + s)-th uniform double of
numpy.random.Generator(PCG64(seed)).random((num_samples - 1, segment_count))
is strictly below bernoulli_p.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import ContractViolation, MaskVector

__all__ = ["RandomSamplerConfig", "generate_random", "save_masks", "load_masks"]


@dataclass(frozen=True)
class RandomSamplerConfig:
    num_samples: int = 1000
    rng_seed: int = 0
    bernoulli_p: float = 0.5

    def __post_init__(self) -> None:
        if self.num_samples < 1:
            raise ContractViolation("num_samples must be >= 1")
        if not 0.0 < self.bernoulli_p < 1.0:
            raise ContractViolation("bernoulli_p must be in (0, 1)")


def generate_random(segment_count: int, cfg: RandomSamplerConfig) -> list[MaskVector]:
    """num_samples masks of the given length; index 0 is the all-ones instance."""
    if segment_count < 1:
        raise ContractViolation("segment_count must be >= 1")
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))
    bits = np.ones((cfg.num_samples, segment_count), dtype=np.uint8)
    if cfg.num_samples > 1:
        draws = rng.random((cfg.num_samples - 1, segment_count))
        bits[1:] = (draws < cfg.bernoulli_p).astype(np.uint8)
    return [MaskVector(row) for row in bits]


def save_masks(masks: list[MaskVector], path: str | Path) -> None:
    """Same JSON-lines layout as the sample table, with the path field omitted."""
    from .dataio import atomic_write_text

    lines = [json.dumps({"mask": [int(b) for b in m.bits], "processed": True},
                        separators=(",", ":"))
             for m in masks]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def load_masks(path: str | Path) -> list[MaskVector]:
    masks = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            masks.append(MaskVector.from_bits(json.loads(line)["mask"]))
    return masks
