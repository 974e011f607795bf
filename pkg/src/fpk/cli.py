"""Command-line front end: ``fpk <subcommand> --config run.json [--threads n] [--out dir]``.

Exit status 0 on success, 2 for configuration errors, 1 for runtime errors.
The output directory is, in increasing priority, the config's ``out_dir``,
``--out`` and the ``FPK_OUT`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import filtering as fl
from . import fk_solver as fk
from . import mc_reference as mc
from . import quadrature as qd
from . import stationary as st
from . import systems as sy
from . import trajectories as tr
from .config import RunConfig, load_config
from .errors import ConfigError, FPKError
from .grids import Box, RegularGrid


class _Context:
    def __init__(self, cfg: RunConfig, config_path: Path, out: Path, threads: int):
        self.cfg = cfg
        self.base = config_path.parent
        self.out = out
        self.threads = threads
        self._system = None

    def path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else self.base / p

    @property
    def system(self) -> sy.SystemSpec:
        if self._system is None:
            self._system = sy.get_system(self.cfg.system["name"], **self.cfg.system["params"])
            if self._system.dim != self.cfg.domain.dim:
                raise ConfigError("domain dimension does not match the system")
        return self._system

    def pinf(self) -> st.StationaryDensity:
        spec = self.cfg.pinf
        variant = spec["variant"]
        if variant == "gradient":
            return st.GradientAnalytic(self.system)
        if variant == "ou":
            return st.GaussianAnalytic.for_ou(self.system)
        if variant == "gaussian":
            if spec["mean"] is None or spec["variance"] is None:
                raise ConfigError("pinf.mean and pinf.variance are required for the gaussian variant")
            return st.GaussianAnalytic(spec["mean"], spec["variance"])
        return st.read_grid_file(self.path(spec["grid_file"]), spec["extrapolation"])

    def em(self) -> tr.EmConfig:
        self.cfg.require("t_final", "steps", "n_traj")
        return tr.EmConfig(self.cfg.t_final, self.cfg.steps, self.cfg.n_traj, self.cfg.seed)

    def grid(self) -> RegularGrid:
        if self.cfg.grid is None:
            raise ConfigError("grid is required for this subcommand")
        if not self.cfg.domain.is_bounded:
            raise ConfigError("domain must be bounded to carry a grid")
        return RegularGrid.over(self.cfg.domain, self.cfg.grid["counts"])

    def meta(self, **extra) -> dict:
        out = {
            "system": self.cfg.system,
            "seed": self.cfg.seed,
            "M": self.cfg.steps,
            "N": self.cfg.n_traj,
            "T": self.cfg.t_final,
            "D": self.cfg.domain.pairs(),
            "Omega": self.cfg.omega.pairs(),
            "policy": self.cfg.policy,
        }
        out.update(extra)
        return out


def _say(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_solve(ctx: _Context) -> None:
    cfg = ctx.cfg
    sys_ = ctx.system
    em = ctx.em()
    if cfg.points is not None:
        nodes = np.asarray(cfg.points, dtype=float).reshape(-1, sys_.dim)
        est = fk.solve_nodes(sys_, ctx.pinf(), nodes, em, cfg.omega, cfg.policy, threads=ctx.threads)
    else:
        est = fk.solve_grid(sys_, ctx.pinf(), ctx.grid(), em, cfg.omega, cfg.policy, ctx.threads)
    out = ctx.out / "solve.csv"
    est.write_csv(out, ctx.meta())
    _say(f"wrote {out}")
    if cfg.compare_exact:
        exact = np.stack([sy.ou_density(sys_, t, est.nodes) for t in est.times], axis=1)
        late = est.stderr[:, 1:] > 0
        z = np.abs(est.values[:, 1:] - exact[:, 1:])[late] / est.stderr[:, 1:][late]
        frac = float(np.mean(z <= 3.0)) if z.size else 1.0
        worst = float(np.max(z)) if z.size else 0.0
        _say(f"max |p_hat - p_exact| / stderr = {worst:.6g}; within 3 stderr: {frac:.4f}")


def cmd_mc(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = ctx.cfg.section("mc")
    cfg.require("t_final")
    if sec["box"] is not None:
        box = Box.from_pairs(sec["box"])
        bins = sec["bins"]
        if bins is None:
            raise ConfigError("mc.bins is required together with mc.box")
    elif cfg.grid is not None:
        box, bins = mc.bins_centered_on(ctx.grid())
    else:
        if sec["bins"] is None:
            raise ConfigError("mc.bins (or a grid) is required")
        box, bins = cfg.domain, sec["bins"]
    steps = sec["steps"] or cfg.steps
    if steps is None:
        raise ConfigError("mc.steps or steps is required")
    hist = mc.mc_solve(ctx.system, cfg.t_final, steps, sec["n_particles"], box, bins, cfg.seed, ctx.threads)
    out = ctx.out / "mc.csv"
    hist.write_csv(out, cfg.t_final, ctx.meta(steps=steps))
    _say(f"wrote {out}; mass inside box {hist.mass_inside:.6g}")


def cmd_xi(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("xi")
    cfg.require("t_final", "steps")
    est = dg.estimate_xi(
        ctx.system, ctx.pinf(), cfg.domain, cfg.omega, cfg.t_final, cfg.steps,
        sec["n_origins"], sec["n_traj"], cfg.seed, ctx.threads,
    )
    out = ctx.out / "xi.csv"
    est.write_csv(out, ctx.meta())
    _say(f"wrote {out}")
    _say(f"xi({cfg.t_final:g}) = {est.xi[-1]:.6f} +- {est.stderr[-1]:.6f}")


def cmd_escape_study(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("escape_study")
    if not sec["omegas"]:
        raise ConfigError("escape_study.omegas is required")
    omegas = [Box.from_pairs(o) for o in sec["omegas"]]
    rows = dg.escape_error_study(
        ctx.system, ctx.pinf(), cfg.domain, omegas, ctx.em(), sec["n_origins"], ctx.threads
    )
    out = ctx.out / "escape_study.csv"
    dg.write_study_csv(out, rows, ctx.meta())
    _say(f"wrote {out}")
    for r in rows:
        _say(f"epsilon={r.epsilon:.6g} error={r.avg_abs_error:.6g} ratio={r.ratio:.6g}")


def cmd_filter(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("observation")
    if sec["observed_axes"] is None or sec["sigma_o"] is None:
        raise ConfigError("observation.observed_axes and observation.sigma_o are required")
    em = ctx.em()
    sys_ = ctx.system
    record = {}
    if sec["y"] is None:
        truth, obs = fl.simulate_observation(
            sys_, em.t_final, sec["truth_steps"], sec["observed_axes"], sec["sigma_o"], sec["truth_seed"]
        )
        record["truth"] = truth.tolist()
    else:
        obs = fl.Observation(tuple(sec["observed_axes"]), sec["y"], sec["sigma_o"])
    record["observation"] = {"observed_axes": list(obs.observed_axes), "y": obs.y.tolist(),
                             "sigma_o": obs.sigma_o}
    res = fl.one_step_filter(sys_, ctx.pinf(), obs, em.t_final, ctx.grid(), em, cfg.omega,
                             cfg.policy, ctx.threads)
    meta = ctx.meta(**record)
    res.prediction.write_csv(ctx.out / "filter_prediction.csv", meta)
    res.posterior.write_csv(ctx.out / "filter_posterior.csv", meta)
    keep = tuple(sec["keep"])
    pm, qm = res.marginal(keep, "prediction"), res.marginal(keep)
    pm.write_csv(ctx.out / "filter_prediction_marginal.csv", meta)
    qm.write_csv(ctx.out / "filter_posterior_marginal.csv", meta)
    _say(f"wrote filter outputs to {ctx.out}")
    _say(f"modes at 50% of max: prediction {fl.count_modes(pm.values)}, "
         f"posterior {fl.count_modes(qm.values)}")


def cmd_marginal(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("marginal")
    keep = tuple(sec["keep"])
    sys_ = ctx.system
    source = sec["source"]
    if source == "p0":
        field = qd.marginal_2d(sys_.p0.pdf, keep, cfg.domain, sec["n_per_axis"])
    elif source == "pinf":
        pinf = ctx.pinf()
        field = qd.marginal_2d(lambda x: np.exp(pinf.log_density(x)), keep, cfg.domain,
                               sec["n_per_axis"])
    elif source == "solve":
        grid = ctx.grid()
        est = fk.solve_grid(sys_, ctx.pinf(), grid, ctx.em(), cfg.omega, cfg.policy, ctx.threads)
        field = qd.marginal_from_grid(grid, est.values[:, -1], keep)
    else:
        raise ConfigError("marginal.source must be p0, pinf or solve")
    if sec["normalize"]:
        field = field.normalized()
    out = ctx.out / "marginal.csv"
    field.write_csv(out, ctx.meta(source=source))
    _say(f"wrote {out}")


def cmd_pinn_demo(ctx: _Context) -> None:
    sec = ctx.cfg.section("pinn")
    times = sec["sample_times"] or [round(0.1 * i, 12) for i in range(11)]
    pts = sec["points"]
    if pts is None:
        box = ctx.cfg.domain
        if not box.is_bounded:
            raise ConfigError("pinn.points or a bounded domain is required")
        pts = RegularGrid.over(box, [61] * box.dim).nodes()
    rows = dg.pinn_pathology(ctx.system, times, pts, sec["k_values"])
    out = ctx.out / "pinn.csv"
    dg.write_pathology_csv(out, rows, {"sample_times": list(times)})
    _say(f"wrote {out}")
    for r in rows:
        _say(f"k={r.k:g} J={r.J:.6g} bound={r.bound:.6g} sup_gap={r.sup_gap:.6g}")


def cmd_check_growth(ctx: _Context) -> None:
    sec = ctx.cfg.section("growth")
    sys_ = ctx.system
    C = sec["C"]
    if C is None:
        C = sy.GROWTH_CONSTANTS.get(sys_.name)
        if C is None:
            raise ConfigError("growth.C is required for this system")
    from . import rng

    keys = rng.derive_keys(rng.stream_root(sec["seed"], rng.TAG_ORIGINS), 0, sec["n_samples"])
    w = sec["half_width"]
    sample = -w + 2 * w * rng.uniforms(keys, 0, sys_.dim)
    rep = sy.growth_constant_check(sys_, C, sample)
    _say(f"C={C:g} max_violation={rep.max_violation:.17g} pass={rep.passed}")
    if not rep.passed:
        raise FPKError("growth condition violated")


def cmd_dump_traj(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("trajectory")
    if sec["origin"] is None:
        raise ConfigError("trajectory.origin is required")
    sys_ = ctx.system
    dens = fk.effective_density(ctx.pinf(), cfg.omega, cfg.policy)
    batch = tr.simulate_batch(fk.hsde_field(sys_, dens), sys_.sigma, sec["origin"], ctx.em(),
                              cfg.omega, cfg.policy, 0, ctx.threads)
    out = ctx.out / sec["file"]
    tr.write_batch(out, batch)
    _say(f"wrote {out}")


def cmd_rescore(ctx: _Context) -> None:
    cfg = ctx.cfg
    sec = cfg.section("trajectory")
    src = ctx.out / sec["file"]
    if not src.exists():
        src = ctx.path(sec["file"])
    batch = tr.read_batch(src)
    est = fk.rescore(batch, ctx.system, ctx.pinf(), cfg.omega, cfg.policy)
    out = ctx.out / "rescore.csv"
    est.write_csv(out, ctx.meta(source=str(src)))
    _say(f"wrote {out}")


def cmd_build_pinf(ctx: _Context) -> None:
    sec = ctx.cfg.section("build_pinf")
    if sec["counts"] is None:
        raise ConfigError("build_pinf.counts is required")
    if not ctx.cfg.omega.is_bounded:
        raise ConfigError("omega must be bounded to tabulate a stationary density")
    grid = RegularGrid.over(ctx.cfg.omega, sec["counts"])
    pinf = mc.tabulate_stationary(
        ctx.system, grid, sec["n_particles"], sec["burn_in"], sec["h"], sec["n_snapshots"],
        sec["snapshot_every"], sec["smoothing"], sec["tail_weight"], ctx.cfg.seed,
    )
    out = ctx.out / sec["file"]
    st.write_grid_file(out, grid, pinf.log_values)
    _say(f"wrote {out}")


COMMANDS = {
    "solve": cmd_solve,
    "mc": cmd_mc,
    "xi": cmd_xi,
    "escape-study": cmd_escape_study,
    "filter": cmd_filter,
    "marginal": cmd_marginal,
    "pinn-demo": cmd_pinn_demo,
    "check-growth": cmd_check_growth,
    "dump-traj": cmd_dump_traj,
    "rescore": cmd_rescore,
    "build-pinf": cmd_build_pinf,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fpk", description="Fokker-Planck solver front end")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--threads", type=int, default=None, help="worker threads (default: config)")
    parser.add_argument("--out", default=None, help="output directory")
    return parser


def open_run(config, out=None, threads=None) -> _Context:
    """Load a config and resolve its output directory, thread count and relative paths."""
    config_path = Path(config)
    cfg = load_config(config_path)
    threads = cfg.threads if threads is None else threads
    if threads < 1:
        raise ConfigError("--threads must be >= 1")
    out = os.environ.get("FPK_OUT") or out
    # a config's own out_dir is relative to the config, flags to the working directory
    out = Path(out) if out else config_path.parent / cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return _Context(cfg, config_path, out, threads)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        ctx = open_run(args.config, args.out, args.threads)
        COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"fpk: error: {exc}", file=sys.stderr)
        return 2
    except FPKError as exc:
        print(f"fpk: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
