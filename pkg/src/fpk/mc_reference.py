"""Monte-Carlo histogram reference solver.

Particles are drawn from ``p0``, moved by Euler-Maruyama under the original
SDE and binned at the final time.  Particle ``i`` takes its initial draw from
``derive(derive(root, 0), i)`` and its Brownian increments from
``derive(derive(root, 1), i)`` with ``root = stream_root(seed, TAG_PARTICLES)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import rng
from .errors import InvalidArgumentError
from .grids import Box, RegularGrid
from .stationary import GridTabulated
from .systems import SystemSpec
from .trajectories import DEFAULT_CHUNK, run_ensemble


@dataclass(frozen=True)
class Histogram:
    """Particle counts in ``bins[k]`` equal boxes per axis of ``box``."""

    box: Box
    bins: tuple[int, ...]
    counts: np.ndarray
    n_particles: int

    @property
    def widths(self) -> np.ndarray:
        return (self.box.hi - self.box.lo) / np.asarray(self.bins)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.widths))

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.n_particles * self.cell_volume)

    @property
    def stderr(self) -> np.ndarray:
        """Poisson approximation ``sqrt(count) / (N vol)``."""
        return np.sqrt(self.counts) / (self.n_particles * self.cell_volume)

    def centers(self) -> list[np.ndarray]:
        return [
            lo + (np.arange(n) + 0.5) * w for lo, n, w in zip(self.box.lo, self.bins, self.widths)
        ]

    def center_points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.centers(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def mass_inside(self) -> float:
        return float(self.counts.sum()) / self.n_particles

    def write_csv(self, path, t: float, meta: dict | None = None) -> None:
        """Same column layout as density estimates; escape_fraction is not applicable (0)."""
        pts = self.center_points()
        d = pts.shape[1]
        header = ["t"] + [f"x_{k}" for k in range(d)] + ["p", "stderr", "escape_fraction"]
        dens, se = self.density.ravel(), self.stderr.ravel()
        lines = [",".join(header)]
        for k in range(pts.shape[0]):
            nums = [t, *pts[k], dens[k], se[k], 0.0]
            lines.append(",".join(f"{v:.17g}" for v in nums))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = {"box": self.box.pairs(), "bins": list(self.bins), "n_particles": self.n_particles}
        sidecar.update(meta or {})
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")


def bins_centered_on(grid: RegularGrid) -> tuple[Box, tuple[int, ...]]:
    """Box and bin counts whose cell centers coincide with the nodes of ``grid``."""
    half = 0.5 * grid.spacing
    return Box(grid.mins - half, grid.maxs + half), grid.shape


def _bin_index(x, box: Box, bins):
    bins = np.asarray(bins)
    idx = np.floor((x - box.lo) / ((box.hi - box.lo) / bins)).astype(np.int64)
    ok = np.all((idx >= 0) & (idx < bins) & np.isfinite(x), axis=1)
    strides = np.ones(len(bins), dtype=np.int64)
    for k in range(len(bins) - 2, -1, -1):
        strides[k] = strides[k + 1] * bins[k + 1]
    return idx[ok] @ strides


def particle_keys(seed: int, start: int, count: int):
    root = rng.stream_root(seed, rng.TAG_PARTICLES)
    return (
        rng.derive_keys(rng.derive(root, 0), start, count),
        rng.derive_keys(rng.derive(root, 1), start, count),
    )


def _check_bins(box: Box, bins) -> tuple[int, ...]:
    bins = tuple(int(b) for b in np.broadcast_to(np.asarray(bins), box.lo.shape))
    if not box.is_bounded:
        raise InvalidArgumentError("histogram box must be bounded")
    if any(b < 1 for b in bins):
        raise InvalidArgumentError("every axis needs at least one bin")
    if not np.all((box.hi - box.lo) / np.asarray(bins) > 0):
        raise InvalidArgumentError("histogram boxes must have positive volume")
    return bins


def mc_solve(
    sys: SystemSpec,
    t: float,
    steps: int,
    n_particles: int,
    box: Box,
    bins,
    seed: int = 0,
    threads: int = 1,
    chunk: int = 1 << 20,
) -> Histogram:
    """Histogram of ``n_particles`` Euler-Maruyama particles of the original SDE at time ``t``.

    Particles that leave ``box`` keep evolving; they are simply not counted.
    """
    if not t > 0:
        raise InvalidArgumentError("t must be positive")
    if steps < 1 or n_particles < 1:
        raise InvalidArgumentError("steps and n_particles must be positive")
    bins = _check_bins(box, bins)
    counts = np.zeros(int(np.prod(bins)), dtype=np.int64)
    everywhere = Box.unbounded(sys.dim)
    h = t / steps

    def observe(j, x, inside):
        if j < steps:
            return np.empty((x.shape[0], 0))
        return x

    for a in range(0, n_particles, chunk):
        n = min(chunk, n_particles - a)
        init_keys, dyn_keys = particle_keys(seed, a, n)
        x0 = sys.p0.sample(init_keys)
        final = run_ensemble(
            sys.drift, sys.sigma, x0, dyn_keys, steps, h, everywhere, observe,
            nonfinite="freeze", threads=threads, chunk=DEFAULT_CHUNK,
        )[-1]
        counts += np.bincount(_bin_index(final, box, bins), minlength=counts.size)
    return Histogram(box, bins, counts.reshape(bins), n_particles)


def tabulate_stationary(
    sys: SystemSpec,
    grid: RegularGrid,
    n_particles: int = 200_000,
    burn_in: float = 20.0,
    h: float = 0.01,
    n_snapshots: int = 100,
    snapshot_every: int = 20,
    smoothing: float = 1.0,
    tail_weight: float = 1e-3,
    seed: int = 0,
    chunk: int = 1 << 16,
) -> GridTabulated:
    """Grid log-density of the stationary law from a long particle run.

    Particles start from ``p0``, run for ``burn_in`` time units and are then
    binned every ``snapshot_every`` steps, ``n_snapshots`` times, into cells
    centred on the grid nodes.  The histogram density is smoothed with a
    Gaussian filter of ``smoothing`` cells and mixed with weight
    ``tail_weight`` with a Gaussian fitted to the same samples, so that the
    log-density and its score stay finite and inward-pointing where no
    particle was seen.
    """
    d = grid.dim
    box, bins = bins_centered_on(grid)
    burn_steps = int(round(burn_in / h))
    total_steps = burn_steps + n_snapshots * snapshot_every
    counts = np.zeros(grid.size, dtype=np.int64)
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    n_samples = 0
    everywhere = Box.unbounded(d)

    def observe(j, x, inside):
        nonlocal n_samples, s1, s2
        if j > burn_steps and (j - burn_steps) % snapshot_every == 0:
            ok = np.all(np.isfinite(x), axis=1)
            xs = x[ok]
            counts[:] += np.bincount(_bin_index(xs, box, bins), minlength=counts.size)
            s1 = s1 + xs.sum(axis=0)
            s2 = s2 + xs.T @ xs
            n_samples += xs.shape[0]
        return np.empty((x.shape[0], 0))

    for a in range(0, n_particles, chunk):
        n = min(chunk, n_particles - a)
        init_keys, dyn_keys = particle_keys(seed, a, n)
        run_ensemble(
            sys.drift, sys.sigma, sys.p0.sample(init_keys), dyn_keys, total_steps, h,
            everywhere, observe, nonfinite="freeze", chunk=chunk,
        )
    dens = counts.reshape(grid.shape) / (n_samples * np.prod(grid.spacing))
    dens = ndimage.gaussian_filter(dens, smoothing, mode="constant")
    mean = s1 / n_samples
    cov = s2 / n_samples - np.outer(mean, mean)
    nodes = grid.nodes() - mean
    prec = np.linalg.inv(cov)
    log_gauss = -0.5 * np.einsum("ni,ij,nj->n", nodes, prec, nodes)
    log_gauss -= 0.5 * np.log(np.linalg.det(2 * np.pi * cov))
    with np.errstate(divide="ignore"):
        log_hist = np.log((1 - tail_weight) * dens.ravel())
    log_p = np.logaddexp(log_hist, np.log(tail_weight) + log_gauss)
    return GridTabulated(grid, log_p, "clamp")
