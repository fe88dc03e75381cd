"""Axis-aligned boxes and seeded random substreams."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidRegion

DEFAULT_SEED = 20240611


@dataclass(frozen=True)
class Region:
    """The box prod_i [lo_i, hi_i]."""

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise InvalidRegion("lo and hi must be non-empty and of equal length")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise InvalidRegion(f"need lo < hi on every axis, got {lo} / {hi}")
        if not all(np.isfinite(lo + hi)):
            raise InvalidRegion("region bounds must be finite")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0) -> "Region":
        return cls((-half_width,) * n, (half_width,) * n)

    @classmethod
    def from_flat(cls, values: Sequence[float]) -> "Region":
        """Parse ``lo1,hi1,lo2,hi2,...``."""
        values = list(values)
        if len(values) % 2 or not values:
            raise InvalidRegion("region needs an even number of bounds lo1,hi1,lo2,hi2,...")
        return cls(tuple(values[0::2]), tuple(values[1::2]))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.all((x >= self.lo_array) & (x <= self.hi_array), axis=1)

    def uniform(self, rng: np.random.Generator, m: int) -> np.ndarray:
        return self.lo_array + (self.hi_array - self.lo_array) * rng.random((m, self.dim))

    def to_flat(self) -> list:
        out = []
        for a, b in zip(self.lo, self.hi):
            out += [a, b]
        return out


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the task identified by ``keys`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("THREADS", "1") or 1)
    return max(1, int(threads))
