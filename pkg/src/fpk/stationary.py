"""Unnormalized stationary densities and the h-SDE drift built from them.

A stationary density only needs to be known up to a constant factor: the
h-SDE drift depends on it through the score and the density estimator
multiplies and divides by it.  Every representation therefore carries an
explicit ``log_offset`` so that rescaling never touches the tabulated data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError, OutOfDomainError
from .grids import Box, RegularGrid
from .systems import SystemSpec, as_batch

__all__ = [
    "ClampedDensity",
    "GaussianAnalytic",
    "GradientAnalytic",
    "GridTabulated",
    "StationaryDensity",
    "hsde_drift",
    "log_density",
    "read_grid_file",
    "score",
    "write_grid_file",
]


class StationaryDensity:
    """Interface: ``log_density`` and ``score`` on batches of shape ``(n, d)``."""

    dim: int
    log_offset: float = 0.0

    def _log_density(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _score(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def log_density(self, x):
        pts, single = as_batch(x, self.dim)
        out = self._log_density(pts)
        return float(out[0]) if single else out

    def score(self, x):
        pts, single = as_batch(x, self.dim)
        out = self._score(pts)
        return out[0] if single else out

    def scaled(self, c: float) -> "StationaryDensity":
        """The same density multiplied by ``c > 0``."""
        if not c > 0:
            raise InvalidArgumentError("scale factor must be positive")
        return replace(self, log_offset=self.log_offset + math.log(c))


@dataclass(frozen=True)
class GradientAnalytic(StationaryDensity):
    """``p(x) ∝ exp(-2 V(x) / sigma^2)`` for a gradient system ``mu = -grad V``."""

    system: SystemSpec
    log_offset: float = 0.0

    def __post_init__(self):
        if self.system.potential is None:
            raise InvalidArgumentError(f"system {self.system.name!r} is not a gradient system")

    @property
    def dim(self) -> int:
        return self.system.dim

    @property
    def sigma(self) -> float:
        return self.system.sigma

    def _log_density(self, x):
        return -2.0 * self.system.potential(x) / self.sigma**2 + self.log_offset

    def _score(self, x):
        # grad V = -mu
        return 2.0 * self.system.drift(x) / self.sigma**2


@dataclass(frozen=True)
class GaussianAnalytic(StationaryDensity):
    """Diagonal Gaussian, e.g. the OU stationary law ``N(0, sigma^2/(2 theta))``."""

    mean: np.ndarray
    variance: np.ndarray
    log_offset: float = 0.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        v = np.broadcast_to(np.asarray(self.variance, dtype=float), m.shape).copy()
        if np.any(v <= 0):
            raise InvalidArgumentError("variance must be positive")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "variance", v)

    @classmethod
    def for_ou(cls, sys: SystemSpec) -> "GaussianAnalytic":
        theta = sys.params["theta"]
        return cls(np.zeros(sys.dim), np.full(sys.dim, sys.sigma**2 / (2 * theta)))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _log_density(self, x):
        z = x - self.mean
        return -0.5 * np.sum(z * z / self.variance, axis=1) + self.log_offset

    def _score(self, x):
        return -(x - self.mean) / self.variance


@dataclass(frozen=True)
class GridTabulated(StationaryDensity):
    """Log-density tabulated on a regular grid.

    Values between nodes are multilinear interpolants of the log-density.  The
    score interpolates per-axis finite-difference fields precomputed on the
    nodes: central in the interior, second-order one-sided on the boundary
    slabs.  Outside the grid, ``extrapolation="clamp"`` evaluates at the
    nearest point of the grid box and ``"strict"`` raises.
    """

    grid: RegularGrid
    log_values: np.ndarray
    extrapolation: str = "clamp"
    log_offset: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.log_values, dtype=float).ravel()
        if vals.shape[0] != self.grid.size:
            raise InvalidArgumentError(
                f"grid has {self.grid.size} nodes but {vals.shape[0]} values were given"
            )
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("tabulated log-density must be finite")
        if self.extrapolation not in ("clamp", "strict"):
            raise InvalidArgumentError("extrapolation must be 'clamp' or 'strict'")
        vals.setflags(write=False)
        object.__setattr__(self, "log_values", vals)
        object.__setattr__(self, "_grad_fields", _difference_fields(self.grid, vals))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def _locate(self, x):
        g = self.grid
        lo, hi = g.mins, g.maxs
        outside = np.any((x < lo) | (x > hi), axis=1)
        if np.any(outside):
            if self.extrapolation == "strict":
                bad = int(np.argmax(outside))
                raise OutOfDomainError(f"point {x[bad].tolist()} lies outside the tabulated grid")
            x = np.clip(x, lo, hi)
        s = (x - lo) / g.spacing
        r = np.rint(s)
        # snap to nodes so node queries return stored values exactly
        s = np.where(np.abs(s - r) <= 1e-10, r, s)
        i0 = np.minimum(np.floor(s).astype(np.int64), g.counts - 2)
        return i0, s - i0

    def _interpolate(self, fields, x):
        """Multilinear interpolation of each field (a flat node array) at ``x``."""
        i0, t = self._locate(x)
        strides = self.grid.strides()
        d = self.dim
        base = i0 @ strides
        out = [np.zeros(x.shape[0]) for _ in fields]
        for corner in range(1 << d):
            w = np.ones(x.shape[0])
            offset = 0
            for k in range(d):
                if corner >> (d - 1 - k) & 1:
                    w = w * t[:, k]
                    offset += strides[k]
                else:
                    w = w * (1.0 - t[:, k])
            idx = base + offset
            for acc, f in zip(out, fields):
                acc += w * f[idx]
        return out

    def _log_density(self, x):
        (v,) = self._interpolate([self.log_values], x)
        return v + self.log_offset

    def _score(self, x):
        return np.stack(self._interpolate(self._grad_fields, x), axis=1)

    def with_values_shifted(self, c: float) -> "GridTabulated":
        """Copy with ``c`` added to every stored value (not via the offset)."""
        return replace(self, log_values=self.log_values + c)


def _difference_fields(grid: RegularGrid, values: np.ndarray) -> list[np.ndarray]:
    v = values.reshape(grid.shape)
    fields = []
    for k, h in enumerate(grid.spacing):
        g = np.gradient(v, h, axis=k, edge_order=2 if grid.counts[k] > 2 else 1)
        g = np.ascontiguousarray(g).ravel()
        g.setflags(write=False)
        fields.append(g)
    return fields


@dataclass(frozen=True)
class ClampedDensity(StationaryDensity):
    """``base`` inside ``omega``; outside, ``base`` at the nearest point of ``omega``.

    This is the imperfect-knowledge density used when trajectories are allowed
    to leave the domain where the stationary density is known.
    """

    base: StationaryDensity
    omega: Box
    log_offset: float = 0.0

    @property
    def dim(self) -> int:
        return self.base.dim

    def _log_density(self, x):
        return self.base._log_density(self.omega.clip(x)) + self.log_offset

    def _score(self, x):
        return self.base._score(self.omega.clip(x))


def log_density(pinf: StationaryDensity, x):
    return pinf.log_density(x)


def score(pinf: StationaryDensity, x):
    return pinf.score(x)


def hsde_drift(pinf: StationaryDensity, sys: SystemSpec, x):
    """Drift ``sigma^2 * score(x) - mu(x)`` of the auxiliary (h-) SDE."""
    pts, single = as_batch(x, sys.dim)
    out = sys.sigma**2 * pinf._score(pts) - sys.drift(pts)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Grid file format


def write_grid_file(path, grid: RegularGrid, log_values) -> None:
    """Write the text grid format: header lines then one value per line (17 digits)."""
    vals = np.asarray(log_values, dtype=float).ravel()
    if vals.shape[0] != grid.size:
        raise InvalidArgumentError("value count does not match the grid")
    lines = [f"dim={grid.dim}"]
    for k in range(grid.dim):
        lines.append(
            f"axis={k} min={float(grid.mins[k]):.17g} max={float(grid.maxs[k]):.17g} count={int(grid.counts[k])}"
        )
    lines.extend(f"{v:.17g}" for v in vals)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_grid_file(path, extrapolation: str = "clamp") -> GridTabulated:
    text = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        key, val = text[0].strip().split("=")
        if key != "dim":
            raise ValueError("first line must be dim=<d>")
        d = int(val)
        mins, maxs, counts = [], [], []
        for k in range(d):
            fields = dict(item.split("=") for item in text[1 + k].split())
            if int(fields["axis"]) != k:
                raise ValueError(f"axis lines out of order at axis {k}")
            mins.append(float(fields["min"]))
            maxs.append(float(fields["max"]))
            counts.append(int(fields["count"]))
        values = np.array([float(s) for s in text[1 + d:] if s.strip()])
    except (ValueError, KeyError, IndexError) as exc:
        raise InvalidArgumentError(f"malformed grid file {path}: {exc}") from None
    return GridTabulated(RegularGrid(mins, maxs, counts), values, extrapolation)
