import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpk import trajectories as tr
from fpk.errors import InvalidArgumentError
from fpk.filtering import (
    Observation,
    count_modes,
    likelihood,
    one_step_filter,
    simulate_observation,
)
from fpk.grids import Box, RegularGrid
from fpk.stationary import GradientAnalytic
from fpk.systems import get_system

RING = get_system("ring2d")
GRID = RegularGrid([-2, -2], [2, 2], [11, 11])
CFG = tr.EmConfig(0.1, 5, 100, 9)
OMEGA = Box.cube(-3, 3, 2)


def test_likelihood_examples():
    obs = Observation((0,), [1.0], 2.0)
    assert likelihood(obs, [1.0, 5.0]) == 1.0
    assert likelihood(obs, [3.0, 0.0]) == pytest.approx(math.exp(-0.5), rel=1e-15)
    obs2 = Observation((1, 0), [0.0, 0.0], 1.0)
    assert likelihood(obs2, [1.0, 1.0]) == pytest.approx(math.exp(-1.0), rel=1e-15)


def test_observation_validation():
    with pytest.raises(InvalidArgumentError):
        Observation((0, 0), [1.0, 1.0], 1.0)
    with pytest.raises(InvalidArgumentError):
        Observation((0,), [1.0, 2.0], 1.0)
    with pytest.raises(InvalidArgumentError):
        Observation((0,), [1.0], 0.0)
    with pytest.raises(InvalidArgumentError):
        likelihood(Observation((3,), [1.0], 1.0), np.zeros((2, 2)))


def test_flat_likelihood_gives_prediction():
    obs = Observation((0,), [0.0], 1e8)
    res = one_step_filter(RING, GradientAnalytic(RING), obs, 0.1, GRID, CFG, OMEGA)
    np.testing.assert_allclose(res.marginal(which="posterior").values,
                               res.marginal(which="prediction").values, rtol=1e-12)


def test_tiny_noise_concentrates_posterior():
    obs = Observation((0, 1), [0.4, 0.4], 1e-3)
    res = one_step_filter(RING, GradientAnalytic(RING), obs, 0.1, GRID, CFG, OMEGA)
    post = res.posterior.values[:, -1]
    best = GRID.nodes()[np.argmax(post)]
    np.testing.assert_allclose(best, [0.4, 0.4])
    assert np.count_nonzero(post > 1e-12 * post.max()) == 1


@settings(max_examples=5, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_posterior_invariant_to_pinf_scale(c):
    pinf = GradientAnalytic(RING)
    obs = Observation((0,), [0.5], 0.5)
    a = one_step_filter(RING, pinf, obs, 0.1, GRID, CFG, OMEGA).marginal()
    b = one_step_filter(RING, pinf.scaled(c), obs, 0.1, GRID, CFG, OMEGA).marginal()
    np.testing.assert_allclose(a.values, b.values, rtol=1e-10)


def test_posterior_records_observation():
    obs = Observation((1,), [0.5], 0.5)
    res = one_step_filter(RING, GradientAnalytic(RING), obs, 0.1, GRID, CFG, OMEGA)
    assert res.posterior.meta["observation"] == {"observed_axes": [1], "y": [0.5], "sigma_o": 0.5}
    assert res.posterior.times.tolist() == [0.1]


def test_simulate_observation_deterministic():
    lz = get_system("lorenz63")
    a = simulate_observation(lz, 0.03, 3, (0, 2), 5.0, seed=4)
    b = simulate_observation(lz, 0.03, 3, (0, 2), 5.0, seed=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1].y, b[1].y)
    assert a[1].y.shape == (2,)


def test_count_modes():
    x = np.linspace(-3, 3, 61)
    X, Y = np.meshgrid(x, x, indexing="ij")
    one = np.exp(-(X**2 + Y**2))
    two = np.exp(-((X - 1.5) ** 2 + Y**2) / 0.2) + np.exp(-((X + 1.5) ** 2 + Y**2) / 0.2)
    assert count_modes(one) == 1
    assert count_modes(two) == 2
    assert count_modes(np.zeros((3, 3))) == 0
    # diagonal neighbours join
    diag = np.zeros((3, 3))
    diag[0, 0] = diag[1, 1] = 1
    assert count_modes(diag) == 1
