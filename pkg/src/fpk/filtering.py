"""One-step filtering: density prediction at the observation gap times a Gaussian likelihood.

The state at time 0 is distributed as the system's ``p0``; it is observed
once, at time ``g``, through a coordinate selection plus isotropic Gaussian
noise.  The unnormalized posterior at a node is the predicted density there
times the likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage

from . import rng
from . import trajectories as tr
from .errors import InvalidArgumentError
from .fk_solver import DensityEstimate, EscapePolicy, solve_grid
from .grids import Box, RegularGrid
from .quadrature import Field2D, marginal_from_grid
from .stationary import StationaryDensity
from .systems import SystemSpec, as_batch


@dataclass(frozen=True)
class Observation:
    """``y = x[observed_axes] + noise``, noise ``N(0, sigma_o^2 I)``."""

    observed_axes: tuple[int, ...]
    y: np.ndarray
    sigma_o: float

    def __post_init__(self):
        axes = tuple(int(a) for a in self.observed_axes)
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if len(set(axes)) != len(axes) or min(axes, default=0) < 0:
            raise InvalidArgumentError("observed axes must be distinct non-negative indices")
        if y.shape != (len(axes),):
            raise InvalidArgumentError("y must have one entry per observed axis")
        if not self.sigma_o > 0:
            raise InvalidArgumentError("sigma_o must be positive")
        object.__setattr__(self, "observed_axes", axes)
        object.__setattr__(self, "y", y)


def likelihood(obs: Observation, x):
    """Unnormalized Gaussian likelihood ``exp(-|Hx - y|^2 / (2 sigma_o^2))``."""
    x = np.asarray(x, dtype=float)
    d = x.shape[-1]
    if max(obs.observed_axes) >= d:
        raise InvalidArgumentError("observation refers to an axis the state does not have")
    pts, single = as_batch(x, d)
    r = pts[:, list(obs.observed_axes)] - obs.y
    out = np.exp(-np.sum(r * r, axis=1) / (2 * obs.sigma_o**2))
    return float(out[0]) if single else out


@dataclass
class FilterResult:
    """Prediction and posterior at time ``g`` on the nodes of ``grid``."""

    grid: RegularGrid
    prediction: DensityEstimate
    posterior: DensityEstimate
    observation: Observation
    record: dict = field(default_factory=dict)

    def marginal(self, keep=(0, 1), which: str = "posterior") -> Field2D:
        """Slice-normalized 2-d marginal of the last time slice."""
        est = self.posterior if which == "posterior" else self.prediction
        return marginal_from_grid(self.grid, est.values[:, -1], tuple(keep)).normalized()


def one_step_filter(
    sys: SystemSpec,
    pinf: StationaryDensity,
    obs: Observation,
    g: float,
    grid: RegularGrid,
    cfg: tr.EmConfig,
    omega: Box,
    policy=EscapePolicy.DROP,
    threads: int = 1,
) -> FilterResult:
    """Predict with the density solver over ``grid`` at time ``g`` and weight by the likelihood.

    ``cfg.t_final`` is replaced by ``g``; steps, paths and seed are kept.
    """
    if not g > 0:
        raise InvalidArgumentError("observation gap g must be positive")
    if max(obs.observed_axes) >= sys.dim:
        raise InvalidArgumentError("observation refers to an axis the system does not have")
    cfg = tr.EmConfig(g, cfg.steps, cfg.n_traj, cfg.master_seed)
    pred = solve_grid(sys, pinf, grid, cfg, omega, policy, threads)
    # only the last slice is the filtering prediction
    pred = replace(
        pred,
        times=pred.times[-1:],
        values=pred.values[:, -1:],
        stderr=pred.stderr[:, -1:],
        n_traj_used=pred.n_traj_used[:, -1:],
        escape_fraction=pred.escape_fraction[:, -1:],
    )
    lik = likelihood(obs, grid.nodes())[:, None]
    post = replace(pred, values=pred.values * lik, stderr=pred.stderr * lik, meta=dict(pred.meta))
    post.meta["observation"] = {
        "observed_axes": list(obs.observed_axes),
        "y": obs.y.tolist(),
        "sigma_o": obs.sigma_o,
    }
    return FilterResult(grid, pred, post, obs)


def simulate_observation(
    sys: SystemSpec,
    g: float,
    steps: int,
    observed_axes,
    sigma_o: float,
    seed: int = 0,
) -> tuple[np.ndarray, Observation]:
    """Truth state at time ``g`` from one path of the original SDE started at a ``p0`` draw, and its noisy observation.

    Streams (all under the truth tag): 0 for the initial draw, 1 for the
    Brownian increments, 2 for the observation noise.
    """
    root = rng.stream_root(seed, rng.TAG_TRUTH)
    keys = np.array([rng.derive(root, k) for k in range(3)], dtype=np.uint64)
    x0 = sys.p0.sample(keys[:1])
    everywhere = Box.unbounded(sys.dim)
    path = tr.run_ensemble(
        sys.drift, sys.sigma, x0, keys[1:2], steps, g / steps, everywhere,
        lambda j, x, inside: x, nonfinite="raise",
    )
    truth = path[-1][0]
    axes = tuple(int(a) for a in observed_axes)
    noise = rng.normals(keys[2:3], 0, len(axes))[0]
    return truth, Observation(axes, truth[list(axes)] + sigma_o * noise, sigma_o)


def count_modes(values, level: float = 0.5) -> int:
    """Number of connected components (8-connectivity) of ``{v >= level * max v}``."""
    v = np.asarray(values, dtype=float)
    peak = np.max(v)
    if not peak > 0:
        return 0
    _, n = ndimage.label(v >= level * peak, structure=np.ones((3,) * v.ndim))
    return int(n)
