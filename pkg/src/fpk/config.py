"""Declarative JSON run configurations.

Unknown keys are rejected at every level so that a typo cannot silently fall
back to a default.  Box faces may be written as ``null`` for an infinite
face.  ``RunConfig.to_dict`` and ``RunConfig.from_dict`` round-trip.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .grids import Box

# section -> {key: default}; None defaults mean "required when the section is used"
SECTIONS: dict[str, dict] = {
    "system": {"name": None, "params": {}},
    "pinf": {"variant": "gradient", "grid_file": None, "extrapolation": "clamp",
             "mean": None, "variance": None},
    "grid": {"counts": None},
    "mc": {"n_particles": 100000, "steps": None, "bins": None, "box": None},
    "xi": {"n_origins": 200, "n_traj": 200},
    "escape_study": {"omegas": None, "n_origins": 64},
    "observation": {"observed_axes": None, "sigma_o": None, "y": None,
                    "truth_seed": 0, "truth_steps": 100, "keep": [0, 1]},
    "pinn": {"k_values": [10, 20, 40], "sample_times": None, "points": None},
    "marginal": {"source": "p0", "keep": [0, 1], "n_per_axis": 40, "normalize": True},
    "growth": {"C": None, "n_samples": 10000, "half_width": 50.0, "seed": 0},
    "trajectory": {"origin": None, "file": "trajectories.fktb"},
    "build_pinf": {"counts": None, "n_particles": 200000, "burn_in": 20.0, "h": 0.01,
                   "n_snapshots": 100, "snapshot_every": 20, "smoothing": 1.0,
                   "tail_weight": 0.001, "file": "pinf_grid.txt"},
}

TOP_LEVEL = {
    "system": None,
    "pinf": None,
    "domain": None,
    "omega": None,
    "t_final": None,
    "steps": None,
    "n_traj": None,
    "seed": 0,
    "policy": "drop",
    "grid": None,
    "points": None,
    "threads": 1,
    "out_dir": ".",
    "compare_exact": False,
    "mc": None,
    "xi": None,
    "escape_study": None,
    "observation": None,
    "pinn": None,
    "marginal": None,
    "growth": None,
    "trajectory": None,
    "build_pinf": None,
}


def _box(pairs, name: str) -> Box:
    try:
        return Box.from_pairs(pairs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: expected a list of [lo, hi] pairs ({exc})") from None


def _section(name: str, raw) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected an object")
    allowed = SECTIONS[name]
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {unknown}")
    out = copy.deepcopy(allowed)
    out.update(copy.deepcopy(raw))
    return out


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < 1:
        raise ConfigError(f"{name} must be a positive integer")
    return value


@dataclass
class RunConfig:
    system: dict
    pinf: dict
    domain: Box
    omega: Box
    t_final: float | None = None
    steps: int | None = None
    n_traj: int | None = None
    seed: int = 0
    policy: str = "drop"
    grid: dict | None = None
    points: list | None = None
    threads: int = 1
    out_dir: str = "."
    compare_exact: bool = False
    sections: dict = field(default_factory=dict)

    def section(self, name: str) -> dict:
        """A subcommand section with defaults filled in (empty input allowed)."""
        return self.sections.get(name) or _section(name, {})

    def require(self, *names: str) -> None:
        for n in names:
            if getattr(self, n) is None:
                raise ConfigError(f"{n} is required for this subcommand")

    # -- conversion -----------------------------------------------------------------

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(raw) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown key(s) {unknown}")
        for key in ("system", "domain", "omega"):
            if raw.get(key) is None:
                raise ConfigError(f"{key} is required")
        system = _section("system", raw["system"])
        if not isinstance(system["name"], str):
            raise ConfigError("system.name must be a string")
        if not isinstance(system["params"], dict):
            raise ConfigError("system.params must be an object")
        pinf = _section("pinf", raw.get("pinf") or {})
        if pinf["variant"] not in ("gradient", "gaussian", "ou", "grid"):
            raise ConfigError("pinf.variant must be gradient, gaussian, ou or grid")
        if pinf["variant"] == "grid" and not pinf["grid_file"]:
            raise ConfigError("pinf.grid_file is required for the grid variant")
        domain = _box(raw["domain"], "domain")
        omega = _box(raw["omega"], "omega")
        if domain.dim != omega.dim:
            raise ConfigError("domain and omega differ in dimension")
        if not domain.issubset(omega):
            raise ConfigError("domain D must be contained in omega")
        t_final = raw.get("t_final")
        if t_final is not None and not (isinstance(t_final, (int, float)) and t_final > 0):
            raise ConfigError("t_final must be positive")
        steps = raw.get("steps")
        n_traj = raw.get("n_traj")
        if steps is not None:
            _positive_int(steps, "steps")
        if n_traj is not None:
            _positive_int(n_traj, "n_traj")
        seed = raw.get("seed", 0)
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed must be a non-negative integer")
        policy = raw.get("policy", "drop")
        if policy not in ("strict", "drop", "clamp"):
            raise ConfigError("policy must be strict, drop or clamp")
        grid = raw.get("grid")
        if grid is not None:
            grid = _section("grid", grid)
            counts = grid["counts"]
            if not isinstance(counts, list) or len(counts) != domain.dim:
                raise ConfigError("grid.counts needs one entry per dimension")
            for c in counts:
                if isinstance(c, bool) or not isinstance(c, int) or c < 1:
                    raise ConfigError("grid.counts entries must be positive integers")
        threads = _positive_int(raw.get("threads", 1), "threads")
        sections = {}
        for name in SECTIONS:
            if name in ("system", "pinf", "grid"):
                continue
            if raw.get(name) is not None:
                sections[name] = _section(name, raw[name])
        return cls(
            system=system, pinf=pinf, domain=domain, omega=omega,
            t_final=None if t_final is None else float(t_final),
            steps=steps, n_traj=n_traj, seed=seed, policy=policy, grid=grid,
            points=raw.get("points"), threads=threads,
            out_dir=str(raw.get("out_dir", ".")),
            compare_exact=bool(raw.get("compare_exact", False)),
            sections=sections,
        )

    def to_dict(self) -> dict:
        out = {
            "system": copy.deepcopy(self.system),
            "pinf": copy.deepcopy(self.pinf),
            "domain": self.domain.pairs(),
            "omega": self.omega.pairs(),
            "t_final": self.t_final,
            "steps": self.steps,
            "n_traj": self.n_traj,
            "seed": self.seed,
            "policy": self.policy,
            "grid": copy.deepcopy(self.grid),
            "points": copy.deepcopy(self.points),
            "threads": self.threads,
            "out_dir": self.out_dir,
            "compare_exact": self.compare_exact,
        }
        for name, sec in self.sections.items():
            out[name] = copy.deepcopy(sec)
        return out

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return RunConfig.from_dict(raw)


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
