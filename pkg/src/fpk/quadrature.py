"""Gauss-Legendre rules, 2D marginals and slice normalization."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DegenerateEstimateError, InvalidArgumentError
from .grids import Box, RegularGrid

MAX_DROPPED_AXES = 6
DEFAULT_N_PER_AXIS = 40


def _legendre(n: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``P_n(x)`` and ``P_n'(x)`` by the three-term recurrence."""
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def gl_nodes(n: int, lo: float = -1.0, hi: float = 1.0, tol: float = 1e-15):
    """Gauss-Legendre nodes (ascending) and weights on ``[lo, hi]``.

    Roots of ``P_n`` are found by Newton iteration from the asymptotic guess
    ``cos(pi (i - 1/4) / (n + 1/2))``.
    """
    n = int(n)
    if n < 1:
        raise InvalidArgumentError("quadrature order must be >= 1")
    if n == 1:
        x, w = np.zeros(1), np.full(1, 2.0)
    else:
        i = np.arange(1, n + 1)
        x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
        for _ in range(100):
            p, dp = _legendre(n, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) <= tol:
                break
        _, dp = _legendre(n, x)
        w = 2.0 / ((1.0 - x * x) * dp * dp)
        order = np.argsort(x)
        x, w = x[order], w[order]
        # exact symmetry of the rule
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
    half = 0.5 * (hi - lo)
    return half * x + 0.5 * (hi + lo), half * w


def trapezoid_weights(n: int, lo: float, hi: float) -> np.ndarray:
    """Weights integrating the piecewise-linear interpolant of ``n`` equispaced nodes."""
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def rule_nodes(rule: str, n: int, lo: float, hi: float):
    if rule == "gl":
        return gl_nodes(n, lo, hi)
    if rule == "trapezoid":
        if n < 2:
            raise InvalidArgumentError("trapezoid rule needs at least 2 nodes")
        return np.linspace(lo, hi, n), trapezoid_weights(n, lo, hi)
    raise InvalidArgumentError(f"unknown quadrature rule {rule!r}")


def integrate_2d(values, box2d: Box, rule: str = "trapezoid") -> float:
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise InvalidArgumentError("expected a 2-d array of node values")
    _, wx = rule_nodes(rule, v.shape[0], box2d.lo[0], box2d.hi[0])
    _, wy = rule_nodes(rule, v.shape[1], box2d.lo[1], box2d.hi[1])
    return float(np.sum(np.outer(wx, wy) * v))


def slice_normalize(values, box2d: Box, rule: str = "trapezoid") -> np.ndarray:
    """Divide 2-d node values by their quadrature integral over ``box2d``.

    ``rule="trapezoid"`` treats ``values`` as sampled on equispaced nodes
    including the box edges (the exact integral of the bilinear interpolant);
    ``rule="gl"`` as sampled on the tensor Gauss-Legendre nodes of the box.
    """
    v = np.asarray(values, dtype=float)
    if np.any(v < 0):
        raise InvalidArgumentError("slice normalization needs non-negative values")
    total = integrate_2d(v, box2d, rule)
    if not total > 0:
        raise DegenerateEstimateError("cannot normalize an all-zero field")
    return v / total


@dataclass(frozen=True)
class Field2D:
    """Values on a tensor grid of kept-axis nodes ``xs`` by ``ys``."""

    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    box: Box
    rule: str
    axes: tuple[int, int] = (0, 1)
    normalization: str = "unnormalized"

    def normalized(self) -> "Field2D":
        return Field2D(
            self.xs, self.ys, slice_normalize(self.values, self.box, self.rule),
            self.box, self.rule, self.axes, "slice-normalized",
        )

    def write_csv(self, path, meta: dict | None = None) -> None:
        lines = ["x,y,value"]
        for i, x in enumerate(self.xs):
            for j, y in enumerate(self.ys):
                lines.append(f"{x:.17g},{y:.17g},{self.values[i, j]:.17g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = {
            "axes": list(self.axes),
            "box": self.box.pairs(),
            "rule": self.rule,
            "normalization": self.normalization,
        }
        sidecar.update(meta or {})
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def marginal_2d(
    f: Callable[[np.ndarray], np.ndarray],
    keep: tuple[int, int],
    box: Box,
    n_per_axis: int = DEFAULT_N_PER_AXIS,
    chunk: int = 1 << 18,
) -> Field2D:
    """Integrate ``f`` over every axis except ``keep`` with tensor Gauss-Legendre.

    The kept axes are sampled on their own Gauss-Legendre nodes, so the result
    can be slice-normalized with ``rule="gl"``.
    """
    d = box.dim
    a, b = keep
    if d < 2 or a == b or not (0 <= a < d and 0 <= b < d):
        raise InvalidArgumentError("keep must name two distinct axes of a box with d >= 2")
    if not box.is_bounded:
        raise InvalidArgumentError("marginalization needs a bounded box")
    dropped = [k for k in range(d) if k not in keep]
    if len(dropped) > MAX_DROPPED_AXES:
        raise InvalidArgumentError(
            f"refusing to integrate over {len(dropped)} axes with a tensor rule; "
            "use Monte-Carlo (mc_reference) marginals instead"
        )
    xs, _ = gl_nodes(n_per_axis, box.lo[a], box.hi[a])
    ys, _ = gl_nodes(n_per_axis, box.lo[b], box.hi[b])
    drop_nodes, drop_w = [], []
    for k in dropped:
        z, w = gl_nodes(n_per_axis, box.lo[k], box.hi[k])
        drop_nodes.append(z)
        drop_w.append(w)
    if dropped:
        mesh = np.meshgrid(*drop_nodes, indexing="ij")
        inner = np.stack([m.ravel() for m in mesh], axis=1)
        wmesh = np.meshgrid(*drop_w, indexing="ij")
        inner_w = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    else:
        inner = np.zeros((1, 0))
        inner_w = np.ones(1)
    kx, ky = np.meshgrid(xs, ys, indexing="ij")
    kept = np.stack([kx.ravel(), ky.ravel()], axis=1)
    n_in = inner.shape[0]
    out = np.empty(kept.shape[0])
    per = max(1, chunk // n_in)
    for s in range(0, kept.shape[0], per):
        block = kept[s : s + per]
        pts = np.empty((block.shape[0] * n_in, d))
        pts[:, a] = np.repeat(block[:, 0], n_in)
        pts[:, b] = np.repeat(block[:, 1], n_in)
        for col, k in enumerate(dropped):
            pts[:, k] = np.tile(inner[:, col], block.shape[0])
        vals = np.asarray(f(pts), dtype=float).reshape(block.shape[0], n_in)
        out[s : s + per] = vals @ inner_w
    box2d = Box([box.lo[a], box.lo[b]], [box.hi[a], box.hi[b]])
    return Field2D(xs, ys, out.reshape(len(xs), len(ys)), box2d, "gl", (a, b))


def marginal_from_grid(grid: RegularGrid, values, keep: tuple[int, int]) -> Field2D:
    """Marginal of node values on a regular grid: exact integral of the multilinear interpolant."""
    a, b = keep
    v = np.asarray(values, dtype=float).reshape(grid.shape)
    axes = grid.axes()
    for k in sorted((k for k in range(grid.dim) if k not in keep), reverse=True):
        w = trapezoid_weights(int(grid.counts[k]), grid.mins[k], grid.maxs[k])
        v = np.tensordot(v, w, axes=([k], [0]))
    if a > b:
        v = v.T
    box2d = Box([grid.mins[a], grid.mins[b]], [grid.maxs[a], grid.maxs[b]])
    return Field2D(axes[a], axes[b], v, box2d, "trapezoid", (a, b))


def multilinear_evaluator(grid: RegularGrid, values) -> Callable[[np.ndarray], np.ndarray]:
    """Evaluator that interpolates node values multilinearly (clamped outside the grid)."""
    from .stationary import GridTabulated

    vals = np.asarray(values, dtype=float).ravel()
    table = GridTabulated(grid, vals, "clamp")
    return lambda x: table._interpolate([table.log_values], np.asarray(x, dtype=float))[0]

