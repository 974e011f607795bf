"""Drift systems: ring potentials, Lorenz-63, Thomas and an Ornstein-Uhlenbeck oracle.

All vector fields are evaluated on batches of shape ``(n, d)`` and return the
same shape.  Diffusion is scalar: ``dX = mu(X) dt + sigma dW`` with diffusion
coefficient ``sigma**2 / 2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import rng
from .errors import InvalidArgumentError

VectorField = Callable[[np.ndarray], np.ndarray]
ScalarField = Callable[[np.ndarray], np.ndarray]


def as_batch(x, dim: int) -> tuple[np.ndarray, bool]:
    """Coerce ``x`` to a ``(n, dim)`` float array; also report whether it was a single point."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise InvalidArgumentError(f"expected points of dimension {dim}, got shape {np.shape(x)}")
    return arr, single


@dataclass(frozen=True)
class InitialDensity:
    """Gaussian mixture with diagonal covariances.

    Parameters
    ----------
    weights : (K,) array
        Positive mixture weights summing to one.
    means : (K, d) array
    variances : (K, d) array
        Diagonal covariance entries, all positive.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if m.shape != v.shape or m.shape[0] != w.shape[0]:
            raise InvalidArgumentError("mixture weights, means and variances disagree in shape")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise InvalidArgumentError("mixture weights must be positive and sum to 1")
        if np.any(v <= 0):
            raise InvalidArgumentError("mixture variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_pdf(self, x) -> np.ndarray:
        pts, single = as_batch(x, self.dim)
        # (n, K) component log densities
        diff = pts[:, None, :] - self.means[None, :, :]
        quad = np.sum(diff * diff / self.variances[None], axis=2)
        log_norm = -0.5 * np.sum(np.log(2 * np.pi * self.variances), axis=1)
        comp = np.log(self.weights)[None] + log_norm[None] - 0.5 * quad
        out = logsumexp(comp, axis=1)
        return out[0] if single else out

    def pdf(self, x) -> np.ndarray:
        return np.exp(self.log_pdf(x))

    def sample(self, keys: np.ndarray) -> np.ndarray:
        """One draw per stream key: counter 0 picks the component, normals 0..d-1 the offset."""
        u = rng.uniforms(keys, 0, 1)[:, 0]
        comp = np.searchsorted(np.cumsum(self.weights), u, side="right")
        comp = np.minimum(comp, len(self.weights) - 1)
        z = rng.normals(keys, 2, self.dim)
        return self.means[comp] + np.sqrt(self.variances[comp]) * z

    def product(self, other: "InitialDensity") -> "InitialDensity":
        """Mixture of the independent concatenation ``(x, y) ~ self x other``."""
        w = np.outer(self.weights, other.weights).ravel()
        k1, k2 = len(self.weights), len(other.weights)
        means = np.hstack([np.repeat(self.means, k2, axis=0), np.tile(other.means, (k1, 1))])
        variances = np.hstack(
            [np.repeat(self.variances, k2, axis=0), np.tile(other.variances, (k1, 1))]
        )
        return InitialDensity(w / w.sum(), means, variances)


@dataclass(frozen=True)
class SystemSpec:
    """A named SDE ``dX = drift(X) dt + sigma dW`` with its initial density."""

    name: str
    dim: int
    sigma: float
    drift: VectorField
    p0: InitialDensity
    potential: ScalarField | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        if not self.sigma > 0:
            raise InvalidArgumentError("sigma must be positive")
        if self.p0.dim != self.dim:
            raise InvalidArgumentError("p0 dimension does not match the system")

    @property
    def diffusion(self) -> float:
        """Scalar diffusion coefficient ``sigma**2 / 2``."""
        return 0.5 * self.sigma**2

    @property
    def is_gradient(self) -> bool:
        return self.potential is not None


def eval_drift(sys: SystemSpec, x) -> np.ndarray:
    pts, single = as_batch(x, sys.dim)
    out = sys.drift(pts)
    return out[0] if single else out


def eval_potential(sys: SystemSpec, x) -> np.ndarray:
    if sys.potential is None:
        raise InvalidArgumentError(f"system {sys.name!r} has no potential")
    pts, single = as_batch(x, sys.dim)
    out = sys.potential(pts)
    return out[0] if single else out


def eval_p0(sys: SystemSpec, x) -> np.ndarray:
    pts, single = as_batch(x, sys.dim)
    out = sys.p0.pdf(pts)
    return float(out[0]) if single else out


@dataclass(frozen=True)
class GrowthReport:
    max_violation: float
    passed: bool


def growth_constant_check(sys: SystemSpec, C: float, sample) -> GrowthReport:
    """Check ``mu(x).x <= C (1 + |x|^2)`` on the sample points.

    ``max_violation`` is the largest value of ``mu(x).x - C (1 + |x|^2)``; the
    check passes when it is non-positive.
    """
    pts = np.asarray(sample, dtype=float)
    if pts.size == 0:
        raise InvalidArgumentError("growth check needs a non-empty sample")
    pts, _ = as_batch(pts, sys.dim)
    lhs = np.sum(sys.drift(pts) * pts, axis=1) - C * (1.0 + np.sum(pts * pts, axis=1))
    worst = float(np.max(lhs))
    return GrowthReport(worst, worst <= 0.0)


# ---------------------------------------------------------------------------
# Registered systems

def _ring_p0() -> InitialDensity:
    return InitialDensity([0.5, 0.5], [[-0.5, -0.5], [0.5, 0.5]], [[0.25, 0.25], [0.25, 0.25]])


def _ring_potential(x):
    r2 = np.sum(x.reshape(x.shape[0], -1, 2) ** 2, axis=2)
    return np.sum((r2 - 1.0) ** 2, axis=1)


def _ring_drift(x):
    n, d = x.shape
    pairs = x.reshape(n, d // 2, 2)
    r2 = np.sum(pairs * pairs, axis=2, keepdims=True)
    return (-4.0 * pairs * (r2 - 1.0)).reshape(n, d)


def ring2d(sigma: float = math.sqrt(2.0)) -> SystemSpec:
    """Quartic ring potential ``V = (x^2 + y^2 - 1)^2`` with a bimodal start."""
    return SystemSpec("ring2d", 2, sigma, _ring_drift, _ring_p0(), _ring_potential, {"sigma": sigma})


def ring2nd(n: int = 2, sigma: float = math.sqrt(2.0)) -> SystemSpec:
    """``n`` decoupled copies of :func:`ring2d` on consecutive coordinate pairs."""
    n = int(n)
    if n < 1:
        raise InvalidArgumentError("ring2nd needs n >= 1")
    p0 = _ring_p0()
    for _ in range(n - 1):
        p0 = p0.product(_ring_p0())
    return SystemSpec(
        "ring2nd", 2 * n, sigma, _ring_drift, p0, _ring_potential, {"n": n, "sigma": sigma}
    )


def _corner_p0() -> InitialDensity:
    return InitialDensity([0.5, 0.5], [[-2.0] * 3, [2.0] * 3], np.ones((2, 3)))


def lorenz63(
    alpha: float = 10.0, beta: float = 8.0 / 3.0, rho: float = 28.0, sigma: float = 10.0
) -> SystemSpec:
    """Noisy Lorenz-63; the default ``sigma = 10`` gives diffusion coefficient 50."""

    def drift(x):
        out = np.empty_like(x)
        out[:, 0] = alpha * (x[:, 1] - x[:, 0])
        out[:, 1] = x[:, 0] * (rho - x[:, 2]) - x[:, 1]
        out[:, 2] = x[:, 0] * x[:, 1] - beta * x[:, 2]
        return out

    params = {"alpha": alpha, "beta": beta, "rho": rho, "sigma": sigma}
    return SystemSpec("lorenz63", 3, sigma, drift, _corner_p0(), None, params)


def thomas(b: float = 0.2, sigma: float = math.sqrt(2.0)) -> SystemSpec:
    """Noisy Thomas system in its cyclically symmetric form."""

    def drift(x):
        # third component is sin(x) - b z, the cyclic image of the first two
        return np.sin(np.roll(x, -1, axis=1)) - b * x

    return SystemSpec("thomas", 3, sigma, drift, _corner_p0(), None, {"b": b, "sigma": sigma})


def ou(
    theta: float = 1.0,
    sigma: float = math.sqrt(2.0),
    dim: int = 1,
    m0: float = 1.0,
    v0: float = 0.25,
) -> SystemSpec:
    """Ornstein-Uhlenbeck ``dX = -theta X dt + sigma dW`` started from ``N(m0, v0 I)``."""
    dim = int(dim)
    p0 = InitialDensity([1.0], [[m0] * dim], [[v0] * dim])

    def drift(x):
        return -theta * x

    def potential(x):
        return 0.5 * theta * np.sum(x * x, axis=1)

    params = {"theta": theta, "sigma": sigma, "dim": dim, "m0": m0, "v0": v0}
    return SystemSpec("ou", dim, sigma, drift, p0, potential, params)


SYSTEMS: dict[str, Callable[..., SystemSpec]] = {
    "ring2d": ring2d,
    "ring2nd": ring2nd,
    "lorenz63": lorenz63,
    "thomas": thomas,
    "ou": ou,
}

# Growth constants for which mu(x).x <= C (1 + |x|^2) holds analytically.
GROWTH_CONSTANTS = {"ring2d": 1.0, "ring2nd": 1.0, "lorenz63": 38.0, "thomas": 3.0}


def get_system(name: str, **params) -> SystemSpec:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown system {name!r}; choose from {sorted(SYSTEMS)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise InvalidArgumentError(f"bad parameters for system {name!r}: {exc}") from None


def ou_density(sys: SystemSpec, t: float, x) -> np.ndarray:
    """Closed-form density of the OU system at time ``t``.

    Each mixture component of ``p0`` is transported exactly: mean
    ``m exp(-theta t)`` and variance ``v exp(-2 theta t) + sigma^2/(2 theta) (1 - exp(-2 theta t))``.
    """
    if sys.name != "ou":
        raise InvalidArgumentError("closed-form density is available for the ou system only")
    theta = sys.params["theta"]
    decay = math.exp(-theta * t)
    stat = sys.sigma**2 / (2 * theta)
    p = sys.p0
    moved = InitialDensity(
        p.weights, p.means * decay, p.variances * decay**2 + stat * (1 - decay**2)
    )
    return moved.pdf(x)
