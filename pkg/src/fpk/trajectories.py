"""Deterministic Euler-Maruyama ensembles with domain-containment tracking.

Trajectory ``i`` simulated for spatial node ``node`` under master seed ``s``
draws its Brownian increments from the stream
``derive(derive(stream_root(s, TAG_HSDE), node), i)``; the increment at step
``j`` (1-based) along axis ``a`` is normal number ``(j - 1) * d + a`` of that
stream, scaled by ``sqrt(h)``.  Work may be split across threads in any way
without changing a single bit of the output.
"""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import rng
from .errors import InvalidArgumentError, SimulationError
from .grids import Box

__all__ = [
    "Box",
    "EmConfig",
    "TrajectoryBatch",
    "escape_fraction",
    "read_batch",
    "run_ensemble",
    "simulate_batch",
    "trajectory_keys",
    "write_batch",
]

DEFAULT_CHUNK = 1 << 16


@dataclass(frozen=True)
class EmConfig:
    """Horizon ``t_final``, ``steps`` Euler-Maruyama steps, ``n_traj`` paths, seed."""

    t_final: float
    steps: int
    n_traj: int
    master_seed: int = 0

    def __post_init__(self):
        if not self.t_final > 0:
            raise InvalidArgumentError("t_final must be positive")
        if int(self.steps) < 1:
            raise InvalidArgumentError("steps must be >= 1")
        if int(self.n_traj) < 1:
            raise InvalidArgumentError("n_traj must be >= 1")

    @property
    def h(self) -> float:
        return self.t_final / self.steps

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_final, self.steps + 1)


@dataclass(frozen=True)
class TrajectoryBatch:
    """``states[i, j]`` is trajectory ``i`` at time ``times[j]``.

    ``inside_omega[i, j]`` is true iff the trajectory stayed in omega at every
    step ``0..j``.
    """

    origin: np.ndarray
    times: np.ndarray
    states: np.ndarray
    inside_omega: np.ndarray

    @property
    def n_traj(self) -> int:
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dim(self) -> int:
        return self.states.shape[2]


def trajectory_keys(seed: int, node_index: int, start: int, count: int, tag: int = rng.TAG_HSDE):
    node_key = rng.derive(rng.stream_root(seed, tag), node_index)
    return rng.derive_keys(node_key, start, count)


def _run_chunk(drift, sigma, x, keys, steps, h, omega, observe, nonfinite, row0, step0):
    n, d = x.shape
    x = x.copy()
    inside = omega.contains(x)
    alive = np.ones(n, dtype=bool)
    scale = sigma * np.sqrt(h)
    outputs = [observe(0, x, inside)]
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(1, steps + 1):
            dw = rng.normals(keys, (step0 + j - 1) * d, d)
            new = x + drift(x) * h + scale * dw
            ok = np.all(np.isfinite(new), axis=1)
            if not np.all(ok[alive]):
                bad = ~ok & alive
                if nonfinite == "raise":
                    i = int(np.argmax(bad))
                    raise SimulationError("non-finite state", row0 + i, j)
                alive &= ok
            if not np.all(alive):
                new[~alive] = x[~alive]
            x = new
            inside &= alive & omega.contains(x)
            outputs.append(observe(j, x, inside))
    return outputs


def run_ensemble(
    drift: Callable[[np.ndarray], np.ndarray],
    sigma: float,
    starts: np.ndarray,
    keys: np.ndarray,
    steps: int,
    h: float,
    omega: Box,
    observe: Callable[[int, np.ndarray, np.ndarray], np.ndarray],
    nonfinite: str = "freeze",
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
    step0: int = 0,
) -> list[np.ndarray]:
    """Step every row of ``starts`` and collect ``observe(j, X, inside)`` per step.

    ``observe`` must return an array whose first axis runs over the rows it was
    given.  The result is a list of ``steps + 1`` arrays over all rows.
    Rows whose state becomes non-finite either raise ``SimulationError``
    (``nonfinite="raise"``) or are frozen at their last finite state and
    marked as having left omega (``"freeze"``).  ``step0`` offsets the noise
    counters so that a run can be continued where a previous one stopped.
    """
    starts = np.asarray(starts, dtype=float)
    n = starts.shape[0]
    bounds = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]

    def work(bound):
        a, b = bound
        return _run_chunk(
            drift, sigma, starts[a:b], keys[a:b], steps, h, omega, observe, nonfinite, a, step0
        )

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(bd) for bd in bounds]
    if len(parts) == 1:
        return parts[0]
    return [np.concatenate([p[j] for p in parts], axis=0) for j in range(steps + 1)]


def simulate_batch(
    drift: Callable[[np.ndarray], np.ndarray],
    sigma: float,
    origin,
    cfg: EmConfig,
    omega: Box,
    policy: str = "strict",
    node_index: int = 0,
    threads: int = 1,
    chunk: int = DEFAULT_CHUNK,
) -> TrajectoryBatch:
    """Simulate ``cfg.n_traj`` Euler-Maruyama paths of ``dX = drift dt + sigma dW`` from ``origin``.

    With ``policy="strict"`` a non-finite state raises ``SimulationError``
    carrying the trajectory and step index; any other policy freezes the
    trajectory and marks it as escaped.
    """
    origin = np.atleast_1d(np.asarray(origin, dtype=float))
    if not np.all(np.isfinite(origin)):
        raise InvalidArgumentError("origin must be finite")
    if omega.dim != origin.shape[0]:
        raise InvalidArgumentError("omega and origin differ in dimension")
    n = cfg.n_traj
    starts = np.broadcast_to(origin, (n, origin.shape[0]))
    keys = trajectory_keys(cfg.master_seed, node_index, 0, n)

    def observe(j, x, inside):
        return np.concatenate([x, inside[:, None].astype(float)], axis=1)

    out = run_ensemble(
        drift,
        sigma,
        starts,
        keys,
        cfg.steps,
        cfg.h,
        omega,
        observe,
        nonfinite="raise" if policy == "strict" else "freeze",
        threads=threads,
        chunk=chunk,
    )
    stacked = np.stack(out, axis=1)
    states = np.ascontiguousarray(stacked[:, :, :-1])
    inside = stacked[:, :, -1].astype(bool)
    return TrajectoryBatch(origin, cfg.times(), states, inside)


def escape_fraction(batch: TrajectoryBatch, j: int) -> float:
    if not 0 <= j <= batch.steps:
        raise InvalidArgumentError(f"step index {j} outside 0..{batch.steps}")
    return float(np.mean(~batch.inside_omega[:, j]))


# ---------------------------------------------------------------------------
# Binary dump

_MAGIC = b"FKTB"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIQd")


def write_batch(path, batch: TrajectoryBatch) -> None:
    """Little-endian dump: header, float64 states in (i, j, axis) order, packed flags."""
    n, m1, d = batch.states.shape
    header = _HEADER.pack(_MAGIC, _VERSION, d, m1 - 1, n, float(batch.times[-1]))
    bits = np.packbits(batch.inside_omega.ravel(), bitorder="little")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(batch.states, dtype="<f8").tobytes())
        fh.write(bits.tobytes())


def read_batch(path) -> TrajectoryBatch:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidArgumentError(f"{path}: truncated trajectory file")
    magic, version, d, m, n, t_final = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidArgumentError(f"{path}: not a version-{_VERSION} trajectory dump")
    count = n * (m + 1) * d
    off = _HEADER.size
    states = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(n, m + 1, d)
    off += 8 * count
    nbits = n * (m + 1)
    bits = np.frombuffer(raw, dtype=np.uint8, count=(nbits + 7) // 8, offset=off)
    inside = np.unpackbits(bits, count=nbits, bitorder="little").astype(bool).reshape(n, m + 1)
    states = states.astype(float)
    times = np.linspace(0.0, t_final, m + 1)
    return TrajectoryBatch(states[0, 0].copy(), times, states, inside)
