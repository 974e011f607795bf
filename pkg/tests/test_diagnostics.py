import math
import warnings

import numpy as np
import pytest

from fpk import trajectories as tr
from fpk.diagnostics import (
    escape_error_study,
    estimate_xi,
    pinn_pathology,
    uniform_origins,
    write_pathology_csv,
)
from fpk.errors import InvalidArgumentError
from fpk.grids import Box
from fpk.stationary import GaussianAnalytic, GradientAnalytic
from fpk.systems import get_system

RING = get_system("ring2d")


def test_uniform_origins_deterministic_and_inside():
    box = Box([-1.0, 0.0], [1.0, 5.0])
    a = uniform_origins(box, 100, 3)
    np.testing.assert_array_equal(a, uniform_origins(box, 100, 3))
    assert box.contains(a).all()
    with pytest.raises(InvalidArgumentError):
        uniform_origins(Box.unbounded(2), 3, 0)


def test_xi_is_one_for_unbounded_omega():
    xi = estimate_xi(RING, GradientAnalytic(RING), Box.cube(-1, 1, 2), Box.unbounded(2),
                     0.5, 20, 8, 50, seed=1)
    np.testing.assert_array_equal(xi.xi, 1.0)


def test_xi_requires_domain_inside_omega():
    with pytest.raises(InvalidArgumentError, match="contained in omega"):
        estimate_xi(RING, GradientAnalytic(RING), Box.cube(-4, 4, 2), Box.cube(-3, 3, 2),
                    1.0, 10, 4, 4)


def test_xi_non_increasing_in_time_and_bounded():
    xi = estimate_xi(RING, GradientAnalytic(RING), Box.cube(-1, 1, 2), Box.cube(-1.3, 1.3, 2),
                     1.0, 50, 16, 100, seed=2)
    assert xi.xi[0] == 1.0
    assert np.all(np.diff(xi.xi) <= 0)
    assert 0 <= xi.xi[-1] < 1
    assert xi.at(1.0) == xi.xi[-1]


def test_xi_csv(tmp_path):
    xi = estimate_xi(RING, GradientAnalytic(RING), Box.cube(-1, 1, 2), Box.cube(-3, 3, 2),
                     0.2, 4, 4, 10)
    xi.write_csv(tmp_path / "xi.csv")
    lines = (tmp_path / "xi.csv").read_text().splitlines()
    assert lines[0] == "t,xi,stderr" and len(lines) == 6


def test_escape_study_ordering():
    cfg = tr.EmConfig(0.5, 25, 400, 3)
    omegas = [Box.cube(-1.2, 1.2, 2), Box.cube(-3, 3, 2), Box.cube(-1.5, 1.5, 2)]
    rows = escape_error_study(RING, GradientAnalytic(RING), Box.cube(-1, 1, 2), omegas, cfg, 16)
    eps = [r.epsilon for r in rows]
    assert eps == sorted(eps)
    err = [r.avg_abs_error for r in rows]
    assert all(a <= b for a, b in zip(err, err[1:]))
    assert rows[-1].ratio > 0


def test_escape_study_needs_nested_boxes():
    cfg = tr.EmConfig(0.5, 5, 10, 3)
    omegas = [Box([-2.0, -1.2], [1.2, 1.2]), Box([-1.2, -2.0], [1.2, 1.2])]
    with pytest.raises(InvalidArgumentError, match="nested"):
        escape_error_study(RING, GradientAnalytic(RING), Box.cube(-1, 1, 2), omegas, cfg, 4)


OU = get_system("ou")
TIMES = np.linspace(0, 1, 11)
POINTS = np.linspace(-3, 3, 61)


def test_pathology_initial_term_vanishes_and_bound_holds():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = pinn_pathology(OU, TIMES, POINTS, [10, 20, 40])
    for r in rows:
        assert r.initial_term == 0.0
        assert r.J <= r.bound
        assert r.sup_gap > 0


def test_pathology_k_values_exceeding_inverse_t2_do_not_warn():
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        pinn_pathology(OU, TIMES, POINTS, [20, 40])
    with pytest.warns(RuntimeWarning):
        pinn_pathology(OU, TIMES, POINTS, [5])


def test_pathology_residual_vanishes_before_switch():
    # with a switch time after every sample, f_k is the exact solution
    with pytest.warns(RuntimeWarning):
        rows = pinn_pathology(OU, [0.0, 1e-3, 2e-3], POINTS, [100])
    assert rows[0].J < 1e-20
    assert rows[0].sup_gap == 0.0


def test_pathology_rejects_bad_input(tmp_path):
    with pytest.raises(InvalidArgumentError):
        pinn_pathology(RING, TIMES, POINTS, [10])
    with pytest.raises(InvalidArgumentError):
        pinn_pathology(OU, [0.1, 0.2], POINTS, [10])
    rows = pinn_pathology(OU, TIMES, POINTS, [20])
    write_pathology_csv(tmp_path / "p.csv", rows)
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "k,J,bound,sup_gap"
