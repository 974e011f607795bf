"""Axis-aligned boxes and regular node grids."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_k, hi_k]`` per axis; infinite faces are allowed."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise InvalidArgumentError("box bounds must be 1-d arrays of equal length")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)) or np.any(lo >= hi):
            raise InvalidArgumentError("box needs lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "Box":
        return cls(np.full(dim, lo), np.full(dim, hi))

    @classmethod
    def unbounded(cls, dim: int) -> "Box":
        return cls.cube(-np.inf, np.inf, dim)

    @classmethod
    def from_pairs(cls, pairs) -> "Box":
        """Inverse of ``pairs``; ``None`` stands for an infinite face."""
        lo = [-np.inf if a is None else float(a) for a, _ in pairs]
        hi = [np.inf if b is None else float(b) for _, b in pairs]
        return cls(lo, hi)

    @property
    def dim(self) -> int:
        return self.lo.shape[0]

    @property
    def is_bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi)))

    @property
    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))

    def contains(self, x) -> np.ndarray:
        """Closed-box membership for points of shape ``(..., d)``."""
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lo) & (x <= self.hi), axis=-1)

    def clip(self, x) -> np.ndarray:
        return np.clip(x, self.lo, self.hi)

    def issubset(self, other: "Box") -> bool:
        return bool(np.all(self.lo >= other.lo) and np.all(self.hi <= other.hi))

    def pairs(self) -> list[list[float | None]]:
        """``[lo, hi]`` per axis with infinite faces as ``None`` (JSON null)."""
        def face(v):
            return None if np.isinf(v) else float(v)

        return [[face(a), face(b)] for a, b in zip(self.lo, self.hi)]


@dataclass(frozen=True)
class RegularGrid:
    """Tensor grid of ``counts[k]`` equispaced nodes on ``[mins[k], maxs[k]]``.

    Nodes are linearized row-major with the last axis varying fastest.
    """

    mins: np.ndarray
    maxs: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        mins = np.atleast_1d(np.asarray(self.mins, dtype=float))
        maxs = np.atleast_1d(np.asarray(self.maxs, dtype=float))
        counts = np.atleast_1d(np.asarray(self.counts, dtype=np.int64))
        if not (mins.shape == maxs.shape == counts.shape) or mins.ndim != 1:
            raise InvalidArgumentError("grid mins, maxs and counts must have equal length")
        if np.any(~np.isfinite(mins)) or np.any(~np.isfinite(maxs)) or np.any(mins >= maxs):
            raise InvalidArgumentError("grid needs finite min < max on every axis")
        if np.any(counts < 2):
            raise InvalidArgumentError("grid needs at least 2 nodes per axis")
        object.__setattr__(self, "mins", mins)
        object.__setattr__(self, "maxs", maxs)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def over(cls, box: Box, counts) -> "RegularGrid":
        counts = np.broadcast_to(np.asarray(counts), box.lo.shape)
        return cls(box.lo, box.hi, counts)

    @property
    def dim(self) -> int:
        return self.mins.shape[0]

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self.counts)

    @property
    def spacing(self) -> np.ndarray:
        return (self.maxs - self.mins) / (self.counts - 1)

    @property
    def box(self) -> Box:
        return Box(self.mins, self.maxs)

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, int(n)) for a, b, n in zip(self.mins, self.maxs, self.counts)]

    def nodes(self) -> np.ndarray:
        """All nodes as a ``(size, d)`` array in linearization order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def strides(self) -> np.ndarray:
        s = np.ones(self.dim, dtype=np.int64)
        for k in range(self.dim - 2, -1, -1):
            s[k] = s[k + 1] * self.counts[k + 1]
        return s
