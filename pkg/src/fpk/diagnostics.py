"""Escape diagnostics for the auxiliary SDE and the pathological-loss demo.

``estimate_xi`` measures the average probability that an auxiliary-SDE path
started uniformly in ``D`` stays inside ``omega`` up to each step.
``escape_error_study`` compares clamp-policy estimates on shrinking boxes
against a full-knowledge run driven by the same noise.  ``pinn_pathology``
evaluates the residual loss of the sequence
``f_k = phi_k p + (1 - phi_k) pinf`` (``phi_k(t) = exp(1 - k t)`` for
``t > 1/k``, ``f_k = p`` before) on the OU system, where everything is known
in closed form.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng
from . import trajectories as tr
from .errors import InvalidArgumentError
from .fk_solver import EscapePolicy, hsde_field, solve_nodes
from .grids import Box
from .stationary import StationaryDensity
from .systems import InitialDensity, SystemSpec

_ROW_BUDGET = 1 << 22


def _write_table(path, header, rows, meta=None):
    lines = [",".join(header)]
    lines += [",".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if meta is not None:
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=2), encoding="utf-8")


def uniform_origins(box: Box, n: int, seed: int) -> np.ndarray:
    """``n`` points uniform in ``box``; point ``i`` uses stream ``i`` of the origin tag."""
    if not box.is_bounded:
        raise InvalidArgumentError("origins need a bounded box")
    keys = rng.derive_keys(rng.stream_root(seed, rng.TAG_ORIGINS), 0, n)
    u = rng.uniforms(keys, 0, box.dim)
    return box.lo + u * (box.hi - box.lo)


# ---------------------------------------------------------------------------
# xi


@dataclass(frozen=True)
class XiEstimate:
    t_values: np.ndarray
    xi: np.ndarray
    stderr: np.ndarray
    n_origins: int
    n_traj_per_origin: int

    def at(self, t: float) -> float:
        j = int(np.argmin(np.abs(self.t_values - t)))
        return float(self.xi[j])

    def write_csv(self, path, meta: dict | None = None) -> None:
        rows = zip(self.t_values, self.xi, self.stderr)
        info = {"n_origins": self.n_origins, "n_traj_per_origin": self.n_traj_per_origin}
        info.update(meta or {})
        _write_table(path, ["t", "xi", "stderr"], rows, info)


def estimate_xi(
    sys: SystemSpec,
    pinf: StationaryDensity,
    d_box: Box,
    omega: Box,
    T: float,
    M: int,
    n_origins: int,
    n_traj: int,
    seed: int = 0,
    threads: int = 1,
) -> XiEstimate:
    """Fraction of auxiliary-SDE paths that never left ``omega``, averaged over uniform origins in ``d_box``.

    Origin ``k`` drives its paths with the same noise streams as node ``k``
    of the density solver.  The standard error uses the between-origin
    spread.
    """
    if not d_box.issubset(omega):
        raise InvalidArgumentError("domain D must be contained in omega")
    if n_origins < 1 or n_traj < 1:
        raise InvalidArgumentError("n_origins and n_traj must be positive")
    cfg = tr.EmConfig(T, M, n_traj, seed)
    origins = uniform_origins(d_box, n_origins, seed)
    drift = hsde_field(sys, pinf)
    frac = np.empty((n_origins, M + 1))

    def observe(j, x, inside):
        return inside.astype(float)

    per = max(1, _ROW_BUDGET // (n_traj * (M + 1)))
    for a in range(0, n_origins, per):
        b = min(a + per, n_origins)
        starts = np.repeat(origins[a:b], n_traj, axis=0)
        keys = np.concatenate([tr.trajectory_keys(seed, k, 0, n_traj) for k in range(a, b)])
        out = tr.run_ensemble(
            drift, sys.sigma, starts, keys, M, cfg.h, omega, observe, threads=threads
        )
        for j in range(M + 1):
            frac[a:b, j] = out[j].reshape(b - a, n_traj).mean(axis=1)
    xi = frac.mean(axis=0)
    if n_origins > 1:
        se = frac.std(axis=0, ddof=1) / math.sqrt(n_origins)
    else:
        se = np.zeros(M + 1)
    return XiEstimate(cfg.times(), xi, se, n_origins, n_traj)


# ---------------------------------------------------------------------------
# Escape error study


@dataclass(frozen=True)
class EscapeStudyRow:
    omega: Box
    epsilon: float
    avg_abs_error: float
    mc_floor: float

    @property
    def ratio(self) -> float:
        return self.avg_abs_error / self.epsilon if self.epsilon > 0 else math.nan


def _check_nested(omegas: list[Box]) -> list[Box]:
    if not omegas:
        raise InvalidArgumentError("need at least one omega")
    ordered = sorted(omegas, key=lambda b: float(np.sum(b.hi - b.lo)))
    for small, big in zip(ordered, ordered[1:]):
        if not small.issubset(big):
            raise InvalidArgumentError("omegas must be nested boxes")
    return ordered


def escape_error_study(
    sys: SystemSpec,
    pinf_true: StationaryDensity,
    d_box: Box,
    omegas: list[Box],
    cfg: tr.EmConfig,
    n_origins: int = 64,
    threads: int = 1,
) -> list[EscapeStudyRow]:
    """Clamp-policy error against a full-knowledge run, per omega, sorted by escape fraction.

    The reference uses ``pinf_true`` on all of space; every clamp run reuses
    its noise, so differences come only from paths that left omega.
    ``epsilon`` is the fraction of paths from the clamp run that left omega
    by ``T``; the error is the origin-averaged ``|p_clamp(T) - p_full(T)|``.
    ``mc_floor`` is the origin-averaged standard error of the reference.
    """
    ordered = _check_nested(omegas)
    for om in ordered:
        if not d_box.issubset(om):
            raise InvalidArgumentError("domain D must be contained in omega")
    origins = uniform_origins(d_box, n_origins, cfg.master_seed)
    full = solve_nodes(
        sys, pinf_true, origins, cfg, Box.unbounded(sys.dim), EscapePolicy.CLAMP, threads=threads
    )
    ref = full.values[:, -1]
    floor = float(np.mean(full.stderr[:, -1]))
    rows = []
    for om in ordered:
        est = solve_nodes(sys, pinf_true, origins, cfg, om, EscapePolicy.CLAMP, threads=threads)
        eps = float(np.mean(est.escape_fraction[:, -1]))
        err = float(np.mean(np.abs(est.values[:, -1] - ref)))
        rows.append(EscapeStudyRow(om, eps, err, floor))
    rows.sort(key=lambda r: r.epsilon)
    return rows


def write_study_csv(path, rows: list[EscapeStudyRow], meta: dict | None = None) -> None:
    table = [
        (r.epsilon, r.avg_abs_error, r.mc_floor, *np.column_stack([r.omega.lo, r.omega.hi]).ravel())
        for r in rows
    ]
    d = rows[0].omega.dim if rows else 0
    header = ["epsilon", "avg_abs_error", "mc_floor"]
    header += [f"omega_{k}_{s}" for k in range(d) for s in ("lo", "hi")]
    _write_table(path, header, table, meta)


# ---------------------------------------------------------------------------
# Pathological minimizing sequence on OU


@dataclass(frozen=True)
class PathologyRow:
    k: float
    J: float
    bound: float
    sup_gap: float
    initial_term: float


def _gauss_terms(dens: InitialDensity, x):
    """Per-component values ``g`` and centred coordinates ``z = x - m``."""
    z = x[:, None, :] - dens.means[None]
    v = dens.variances[None]
    logg = -0.5 * np.sum(z * z / v + np.log(2 * np.pi * v), axis=2)
    return np.exp(logg) * dens.weights[None], z, v


def _ou_fields(theta, sigma, p0: InitialDensity, t, x):
    """``p``, ``dp/dt`` and ``L p`` at time ``t`` from analytic derivatives of the moving mixture."""
    decay = math.exp(-theta * t)
    stat = sigma**2 / (2 * theta)
    m = p0.means * decay
    v = p0.variances * decay**2 + stat * (1 - decay**2)
    dm = -theta * m
    dv = -2 * theta * v + sigma**2
    moved = InitialDensity(p0.weights, m, v)
    g, z, vv = _gauss_terms(moved, x)
    dmv, dvv = dm[None], dv[None]
    dlog_t = np.sum(z * dmv / vv + z * z * dvv / (2 * vv * vv) - dvv / (2 * vv), axis=2)
    p = g.sum(axis=1)
    p_t = (g * dlog_t).sum(axis=1)
    return p, p_t, _ou_generator(theta, sigma, g, z, vv, x)


def _ou_generator(theta, sigma, g, z, v, x):
    # L f = sum_a theta (f + x_a d_a f) + sigma^2/2 d_aa f, per mixture component
    d_a = -z / v * g[:, :, None]
    d_aa = (z * z / (v * v) - 1.0 / v) * g[:, :, None]
    d = x.shape[1]
    out = theta * (d * g + np.sum(x[:, None, :] * d_a, axis=2)) + 0.5 * sigma**2 * np.sum(d_aa, axis=2)
    return out.sum(axis=1)


def pinn_pathology(
    sys: SystemSpec,
    sample_times,
    sample_points,
    k_values,
) -> list[PathologyRow]:
    """Residual loss ``J(f_k)``, its analytic bound and ``sup |f_k - p|`` at ``t >= t_2``.

    ``sample_times`` must start at 0 and be strictly increasing.  ``J`` is
    the mean squared residual ``df_k/dt - L f_k`` over all sample pairs plus
    the mean squared initial mismatch.  The bound is
    ``2 B e^2 k^2 exp(-2 k t_2)`` with ``B`` the largest squared value of
    ``p`` or ``pinf`` over the samples.  A ``RuntimeWarning`` is issued for
    ``k <= 1/t_2``, outside the regime where the bound is guaranteed.
    """
    if sys.name != "ou":
        raise InvalidArgumentError("the pathology demo needs the closed-form ou system")
    t = np.asarray(sample_times, dtype=float)
    if t.ndim != 1 or t.size < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise InvalidArgumentError("sample_times must start at 0 and increase strictly")
    x = np.asarray(sample_points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != sys.dim:
        raise InvalidArgumentError("sample points disagree with the system dimension")
    theta, sigma = sys.params["theta"], sys.sigma
    stat_var = sigma**2 / (2 * theta)
    pinf_mix = InitialDensity([1.0], [np.zeros(sys.dim)], [np.full(sys.dim, stat_var)])
    g_inf, z_inf, v_inf = _gauss_terms(pinf_mix, x)
    pinf = g_inf.sum(axis=1)
    l_pinf = _ou_generator(theta, sigma, g_inf, z_inf, v_inf, x)
    fields = [_ou_fields(theta, sigma, sys.p0, ti, x) for ti in t]
    p = np.stack([f[0] for f in fields])
    p_t = np.stack([f[1] for f in fields])
    l_p = np.stack([f[2] for f in fields])
    B = float(max(np.max(p * p), np.max(pinf * pinf)))
    t2 = t[1]
    p0 = sys.p0.pdf(x)
    rows = []
    for k in k_values:
        k = float(k)
        if k <= 1.0 / t2:
            warnings.warn(
                f"k={k:g} <= 1/t_2={1 / t2:g}: the loss bound is only guaranteed for k > 1/t_2",
                RuntimeWarning,
                stacklevel=2,
            )
        late = t > 1.0 / k
        phi = np.where(late, np.exp(1.0 - k * t), 1.0)[:, None]
        dphi = np.where(late, -k * np.exp(1.0 - k * t), 0.0)[:, None]
        f = phi * p + (1 - phi) * pinf[None]
        f_t = dphi * (p - pinf[None]) + phi * p_t
        lf = phi * l_p + (1 - phi) * l_pinf[None]
        resid = f_t - lf
        init = f[0] - p0
        J = float(np.mean(resid * resid) + np.mean(init * init))
        bound = 2 * B * math.e**2 * k * k * math.exp(-2 * k * t2)
        gap = float(np.max(np.abs(f[1:] - p[1:])))
        rows.append(PathologyRow(k, J, bound, gap, float(np.mean(init * init))))
    return rows


def write_pathology_csv(path, rows: list[PathologyRow], meta: dict | None = None) -> None:
    table = [(r.k, r.J, r.bound, r.sup_gap) for r in rows]
    _write_table(path, ["k", "J", "bound", "sup_gap"], table, meta)
