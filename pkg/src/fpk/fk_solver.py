"""Pointwise Fokker-Planck solutions from auxiliary-SDE ensembles.

For a stationary density ``pinf`` (any positive zero of the Fokker-Planck
operator, known up to a constant) the solution at ``(t, x)`` is

    p(t, x) = pinf(x) * E[ p0(X_t) / pinf(X_t) | X_0 = x ],

where ``X`` follows ``dX = (sigma^2 grad log pinf - mu) dt + sigma dW``.  The
expectation is estimated over ``N`` Euler-Maruyama paths, and one ensemble per
node serves every intermediate time ``tau_j``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import trajectories as tr
from .errors import DegenerateEstimateError, EscapeError, InvalidArgumentError, SimulationError
from .grids import Box, RegularGrid
from .quadrature import integrate_2d
from .stationary import ClampedDensity, StationaryDensity
from .systems import SystemSpec

# Upper bound on the number of (row, step) summands held in memory at once.
_GROUP_BUDGET = 1 << 22


class EscapePolicy(str, enum.Enum):
    """How trajectories that leave omega enter the estimate.

    strict: any escape is an error.
    drop:   average only over trajectories still inside omega at tau_j.
    clamp:  keep every trajectory; outside omega the stationary density is
            replaced by its value at the nearest point of omega.
    """

    STRICT = "strict"
    DROP = "drop"
    CLAMP = "clamp"


@dataclass
class DensityEstimate:
    """Estimates on ``nodes`` at ``times``; per-node arrays have shape ``(n_nodes, n_times)``."""

    times: np.ndarray
    nodes: np.ndarray
    values: np.ndarray
    stderr: np.ndarray
    n_traj_used: np.ndarray
    escape_fraction: np.ndarray
    normalization: dict = field(default_factory=lambda: {"kind": "unnormalized"})
    meta: dict = field(default_factory=dict)

    def rows(self):
        """``(t, x, p, stderr, escape_fraction)`` in time-major, node-minor order."""
        for j, t in enumerate(self.times):
            for k in range(self.nodes.shape[0]):
                yield t, self.nodes[k], self.values[k, j], self.stderr[k, j], self.escape_fraction[k, j]

    def write_csv(self, path, meta: dict | None = None) -> None:
        d = self.nodes.shape[1]
        header = ["t"] + [f"x_{k}" for k in range(d)] + ["p", "stderr", "escape_fraction"]
        lines = [",".join(header)]
        for t, x, p, se, esc in self.rows():
            nums = [t, *x, p, se, esc]
            lines.append(",".join(f"{v:.17g}" for v in nums))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
        sidecar = dict(self.meta)
        sidecar["normalization"] = self.normalization
        sidecar.update(meta or {})
        Path(str(path) + ".json").write_text(
            json.dumps(sidecar, indent=2, default=_json_default), encoding="utf-8"
        )

    def slice_normalized(self, shape2d, box2d: Box, axes, rule: str = "trapezoid"):
        """Normalize each time slice over a 2-d node set of shape ``shape2d``.

        Nodes must be ordered row-major over the two varying axes.
        """
        values = self.values.copy()
        stderr = self.stderr.copy()
        for j in range(len(self.times)):
            total = integrate_2d(values[:, j].reshape(shape2d), box2d, rule)
            if not total > 0:
                raise DegenerateEstimateError(f"all-zero slice at time index {j}")
            values[:, j] /= total
            stderr[:, j] /= total
        norm = {"kind": "slice-normalized", "axes": list(axes), "box": box2d.pairs(), "rule": rule}
        return replace(self, values=values, stderr=stderr, normalization=norm)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if isinstance(obj, Box):
        return obj.pairs()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _policy(policy) -> EscapePolicy:
    try:
        return EscapePolicy(policy)
    except ValueError:
        raise InvalidArgumentError(
            f"unknown escape policy {policy!r}; use strict, drop or clamp"
        ) from None


def effective_density(pinf: StationaryDensity, omega: Box, policy) -> StationaryDensity:
    """Stationary density actually used for drift and weights under ``policy``."""
    if _policy(policy) is EscapePolicy.CLAMP and omega.is_bounded:
        return ClampedDensity(pinf, omega)
    return pinf


def hsde_field(sys: SystemSpec, pinf: StationaryDensity):
    sig2 = sys.sigma**2

    def drift(x):
        return sig2 * pinf._score(x) - sys.drift(x)

    return drift


def _reduce(summands, inside, policy, n_traj):
    """Per-node mean, standard error, admitted count of ``summands`` (shape ``(nodes, N)``)."""
    if policy is EscapePolicy.DROP:
        k = np.sum(inside, axis=1)
        masked = np.where(inside, summands, 0.0)
    else:
        k = np.full(summands.shape[0], n_traj)
        masked = summands
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.sum(masked, axis=1) / k
        dev = summands - mean[:, None]
        if policy is EscapePolicy.DROP:
            dev = np.where(inside, dev, 0.0)
        var = np.sum(dev * dev, axis=1) / np.maximum(k - 1, 1)
        se = np.sqrt(var / k)
    return mean, se, k


def _solve(
    sys: SystemSpec,
    pinf: StationaryDensity,
    nodes: np.ndarray,
    node_indices: np.ndarray,
    cfg: tr.EmConfig,
    omega: Box,
    policy,
    threads: int,
    with_prefactor: bool,
):
    policy = _policy(policy)
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if nodes.shape[1] != sys.dim or omega.dim != sys.dim:
        raise InvalidArgumentError("nodes, omega and the system disagree in dimension")
    outside = ~omega.contains(nodes)
    if np.any(outside):
        k = int(np.argmax(outside))
        raise InvalidArgumentError(f"node {nodes[k].tolist()} lies outside omega")

    dens = effective_density(pinf, omega, policy)
    drift = hsde_field(sys, dens)
    n, m = cfg.n_traj, cfg.steps
    n_nodes = nodes.shape[0]

    mean = np.empty((n_nodes, m + 1))
    se = np.empty_like(mean)
    used = np.empty((n_nodes, m + 1), dtype=np.int64)
    esc = np.empty_like(mean)

    def observe(j, x, inside):
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            h0 = np.exp(sys.p0.log_pdf(x) - dens._log_density(x))
        return np.stack([h0, inside.astype(float)], axis=1)

    per_group = max(1, _GROUP_BUDGET // (n * (m + 1)))
    for g0 in range(0, n_nodes, per_group):
        g1 = min(g0 + per_group, n_nodes)
        starts = np.repeat(nodes[g0:g1], n, axis=0)
        keys = np.concatenate(
            [tr.trajectory_keys(cfg.master_seed, int(node_indices[k]), 0, n) for k in range(g0, g1)]
        )
        try:
            out = tr.run_ensemble(
                drift, sys.sigma, starts, keys, m, cfg.h, omega, observe,
                nonfinite="raise" if policy is EscapePolicy.STRICT else "freeze",
                threads=threads,
            )
        except SimulationError as exc:
            node, traj = divmod(exc.traj_index, n)
            raise SimulationError(
                f"non-finite state at node {int(node_indices[g0 + node])}", traj, exc.step_index
            ) from None
        for j in range(m + 1):
            s = out[j][:, 0].reshape(g1 - g0, n)
            inside = out[j][:, 1].reshape(g1 - g0, n) > 0.5
            if policy is EscapePolicy.STRICT and not np.all(inside):
                flat = int(np.argmax(~inside.ravel()))
                node, traj = divmod(flat, n)
                raise EscapeError(traj, j, int(node_indices[g0 + node]))
            mu, sd, k = _reduce(s, inside, policy, n)
            if np.any(k == 0):
                node = int(np.argmax(k == 0))
                raise DegenerateEstimateError(
                    f"every trajectory left omega by step {j} at node {int(node_indices[g0 + node])}"
                )
            mean[g0:g1, j] = mu
            se[g0:g1, j] = sd
            used[g0:g1, j] = k
            esc[g0:g1, j] = 1.0 - np.mean(inside, axis=1)

    if with_prefactor:
        pref = np.exp(dens._log_density(nodes))[:, None]
        mean = pref * mean
        se = pref * se
    meta = {
        "system": sys.name,
        "params": sys.params,
        "seed": cfg.master_seed,
        "M": m,
        "N": n,
        "T": cfg.t_final,
        "Omega": omega.pairs(),
        "policy": policy.value,
    }
    return DensityEstimate(cfg.times(), nodes, mean, se, used, esc, meta=meta)


def solve_h_point(sys, pinf, x, cfg, omega, policy=EscapePolicy.DROP, node_index=0, threads=1):
    """Estimate ``h(tau_j, x) = E[p0/pinf (X_tau_j) | X_0 = x]`` for every step ``j``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _solve(sys, pinf, x[None], np.array([node_index]), cfg, omega, policy, threads, False)


def solve_point(sys, pinf, x, cfg, omega, policy=EscapePolicy.DROP, node_index=0, threads=1):
    """Density estimate ``p(tau_j, x)`` for every step ``j`` from one ensemble."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return _solve(sys, pinf, x[None], np.array([node_index]), cfg, omega, policy, threads, True)


def solve_nodes(sys, pinf, nodes, cfg, omega, policy=EscapePolicy.DROP, node_indices=None, threads=1):
    """``solve_point`` on each row of ``nodes``; node ``k`` uses noise streams of index ``k``."""
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    if node_indices is None:
        node_indices = np.arange(nodes.shape[0])
    return _solve(sys, pinf, nodes, np.asarray(node_indices), cfg, omega, policy, threads, True)


def solve_grid(sys, pinf, grid: RegularGrid, cfg, omega, policy=EscapePolicy.DROP, threads=1):
    """``solve_point`` at every node of ``grid`` (node index = linear grid index)."""
    est = solve_nodes(sys, pinf, grid.nodes(), cfg, omega, policy, None, threads)
    est.meta["grid"] = {
        "mins": grid.mins.tolist(),
        "maxs": grid.maxs.tolist(),
        "counts": grid.counts.tolist(),
    }
    return est


def rescore(batch: tr.TrajectoryBatch, sys: SystemSpec, pinf, omega: Box, policy=EscapePolicy.DROP):
    """Re-evaluate stored h-SDE trajectories against (possibly new) ``sys.p0``.

    The batch must have been simulated with the drift built from the same
    ``pinf``, ``omega`` and ``policy``; only ``p0`` may differ.
    """
    policy = _policy(policy)
    dens = effective_density(pinf, omega, policy)
    n, m1, d = batch.states.shape
    mean = np.empty((1, m1))
    se = np.empty_like(mean)
    used = np.empty((1, m1), dtype=np.int64)
    esc = np.empty_like(mean)
    for j in range(m1):
        x = batch.states[:, j]
        inside = batch.inside_omega[:, j][None]
        if policy is EscapePolicy.STRICT and not np.all(inside):
            raise EscapeError(int(np.argmax(~inside[0])), j)
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            s = np.exp(sys.p0.log_pdf(x) - dens._log_density(x))[None]
        mu, sd, k = _reduce(s, inside, policy, n)
        if k[0] == 0:
            raise DegenerateEstimateError(f"every trajectory left omega by step {j}")
        mean[:, j], se[:, j], used[:, j] = mu, sd, k
        esc[:, j] = 1.0 - np.mean(inside)
    pref = np.exp(dens._log_density(batch.origin[None]))[:, None]
    meta = {"system": sys.name, "N": n, "M": m1 - 1, "T": float(batch.times[-1]), "policy": policy.value}
    return DensityEstimate(batch.times, batch.origin[None], pref * mean, pref * se, used, esc, meta=meta)
