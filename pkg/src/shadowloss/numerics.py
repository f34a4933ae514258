"""Dense float64 helpers and a seedable counter-based random source.

Vectors and matrices are plain ``numpy`` arrays; the helpers here only
validate shape/finiteness and fix the dtype to float64.
"""
from __future__ import annotations

import zlib

import numpy as np

from .errors import DimensionError, NumericError, ParameterError


def as_vector(values, name: str = "vector") -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name} contains non-finite values")
    return v


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericError(f"{name} contains non-finite values")
    return m


def dot(u, v) -> float:
    u = as_vector(u, "u")
    v = as_vector(v, "v")
    if u.shape != v.shape:
        raise DimensionError(f"length mismatch: {u.size} vs {v.size}")
    return float(np.dot(u, v))


def norm(v) -> float:
    v = as_vector(v, "v")
    return float(np.sqrt(np.dot(v, v)))


class RandomSource:
    """Philox-backed generator; identical seeds replay bit-identical draws.

    Independent sub-streams are derived by name with :meth:`derive`, so each
    consumer (split, init, batching, mining) can be replayed on its own.
    """

    def __init__(self, seed: int):
        if seed < 0 or seed >= 2**64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._key = (self.seed,)
        self.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.seed)))

    @classmethod
    def _from_entropy(cls, seed: int, key: tuple[int, ...]) -> "RandomSource":
        rs = cls.__new__(cls)
        rs.seed = seed
        rs._key = key
        rs.generator = np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))
        return rs

    def derive(self, name: str) -> "RandomSource":
        """Return an independent stream keyed by ``name`` (does not advance self)."""
        tag = zlib.crc32(name.encode("utf-8"))
        return RandomSource._from_entropy(self.seed, self._key + (tag,))

    def gaussian(self, mean: float = 0.0, stddev: float = 1.0, size=None):
        if stddev < 0:
            raise ParameterError(f"stddev must be >= 0, got {stddev}")
        if stddev == 0:
            return float(mean) if size is None else np.full(size, float(mean))
        draw = self.generator.normal(mean, stddev, size)
        return float(draw) if size is None else draw

    def uniform(self, low: float, high: float, size=None):
        return self.generator.uniform(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self.generator.permutation(n)

    def integers(self, low: int, high: int, size=None):
        return self.generator.integers(low, high, size)


def gaussian(rng: RandomSource, mean: float, stddev: float) -> float:
    return rng.gaussian(mean, stddev)
