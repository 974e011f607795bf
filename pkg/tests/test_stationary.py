import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpk.errors import InvalidArgumentError, OutOfDomainError
from fpk.grids import Box, RegularGrid
from fpk.stationary import (
    ClampedDensity,
    GaussianAnalytic,
    GradientAnalytic,
    GridTabulated,
    hsde_drift,
    read_grid_file,
    write_grid_file,
)
from fpk.systems import get_system


@pytest.fixture
def ring():
    return get_system("ring2d")


def test_gradient_log_density_examples(ring):
    p = GradientAnalytic(ring)
    assert p.log_density([1.0, 0.0]) == 0.0
    assert p.log_density([0.0, 0.0]) == pytest.approx(-1.0, abs=1e-15)
    np.testing.assert_allclose(p.score([1.0, 1.0]), [-4.0, -4.0], atol=1e-15)


def test_gradient_requires_potential():
    with pytest.raises(InvalidArgumentError):
        GradientAnalytic(get_system("lorenz63"))


def test_gaussian_score():
    p = GaussianAnalytic(np.zeros(2), np.array([2.0, 0.5]))
    x = np.array([[1.0, -3.0], [0.2, 0.4]])
    np.testing.assert_allclose(p.score(x), -x / np.array([2.0, 0.5]))


def test_hsde_drift_examples(ring):
    np.testing.assert_allclose(hsde_drift(GradientAnalytic(ring), ring, [1.0, 1.0]), [-4.0, -4.0],
                               atol=1e-14)
    ou = get_system("ou")
    assert hsde_drift(GaussianAnalytic.for_ou(ou), ou, [3.0])[0] == pytest.approx(-3.0)


@pytest.mark.parametrize("name,params", [("ring2d", {}), ("ring2nd", {"n": 2}),
                                         ("ring2nd", {"n": 5}), ("ou", {"dim": 3})])
def test_gradient_identity(name, params):
    s = get_system(name, **params)
    x = np.random.default_rng(0).uniform(-2, 2, (100, s.dim))
    diff = hsde_drift(GradientAnalytic(s), s, x) - s.drift(x)
    assert np.max(np.linalg.norm(diff, axis=1)) <= 1e-12


def _ring_table(counts=(41, 41)):
    ring = get_system("ring2d")
    grid = RegularGrid([-3, -3], [3, 3], list(counts))
    return grid, GridTabulated(grid, GradientAnalytic(ring).log_density(grid.nodes()))


def test_grid_node_query_is_exact():
    grid, table = _ring_table()
    nodes = grid.nodes()
    idx = np.random.default_rng(1).integers(0, grid.size, 50)
    np.testing.assert_array_equal(table.log_density(nodes[idx]), table.log_values[idx])


def test_grid_affine_score_exact():
    grid = RegularGrid([-1, 0, 2], [1, 3, 4], [5, 7, 4])
    a = np.array([0.5, -2.0, 3.0])
    table = GridTabulated(grid, grid.nodes() @ a + 1.0)
    x = np.random.default_rng(2).uniform([-1, 0, 2], [1, 3, 4], (30, 3))
    np.testing.assert_allclose(table.score(x), np.broadcast_to(a, x.shape), atol=1e-12)
    np.testing.assert_allclose(table.log_density(x), x @ a + 1.0, atol=1e-12)


def test_grid_score_second_order():
    # smooth non-polynomial density; compare at fixed interior points
    s = get_system("ring2d")
    p = GradientAnalytic(s)
    errs = []
    for n in (41, 81):
        grid = RegularGrid([-2, -2], [2, 2], [n, n])
        table = GridTabulated(grid, p.log_density(grid.nodes()))
        # evaluate on nodes of the coarse grid so interpolation error does not enter
        pts = RegularGrid([-1.5, -1.5], [1.5, 1.5], [31, 31]).nodes()
        errs.append(np.max(np.abs(table.score(pts) - p.score(pts))))
    order = np.log2(errs[0] / errs[1])
    assert order >= 1.8, (errs, order)


def test_grid_strict_and_clamp_extrapolation():
    grid, table = _ring_table()
    strict = GridTabulated(grid, table.log_values, "strict")
    with pytest.raises(OutOfDomainError):
        strict.log_density([3.5, 0.0])
    assert table.log_density([3.5, 0.0]) == table.log_density([3.0, 0.0])


def test_grid_rejects_bad_values():
    grid = RegularGrid([0], [1], [3])
    with pytest.raises(InvalidArgumentError):
        GridTabulated(grid, [0.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        GridTabulated(grid, [0.0, np.inf, 1.0])


@settings(max_examples=25, deadline=None)
@given(c=st.floats(-50, 50, allow_nan=False))
def test_offset_leaves_score_and_drift_bit_identical(c):
    grid, table = _ring_table((21, 21))
    ring = get_system("ring2d")
    shifted = table.scaled(np.exp(c))
    x = np.random.default_rng(4).uniform(-3, 3, (40, 2))
    np.testing.assert_array_equal(shifted.score(x), table.score(x))
    np.testing.assert_array_equal(hsde_drift(shifted, ring, x), hsde_drift(table, ring, x))


def test_value_shift_changes_score_only_by_rounding():
    grid, table = _ring_table((21, 21))
    x = np.random.default_rng(5).uniform(-3, 3, (40, 2))
    moved = table.with_values_shifted(123.456)
    np.testing.assert_allclose(moved.score(x), table.score(x), rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(moved.log_density(x) - 123.456, table.log_density(x), atol=1e-11)


def test_clamped_density_uses_nearest_face():
    ring = get_system("ring2d")
    base = GradientAnalytic(ring)
    c = ClampedDensity(base, Box.cube(-1, 1, 2))
    assert c.log_density([5.0, 0.3]) == base.log_density([1.0, 0.3])
    np.testing.assert_array_equal(c.score([5.0, 0.3]), base.score([1.0, 0.3]))
    assert c.log_density([0.2, 0.3]) == base.log_density([0.2, 0.3])


def test_grid_file_round_trip(tmp_path):
    grid, table = _ring_table((7, 9))
    path = tmp_path / "pinf.txt"
    write_grid_file(path, grid, table.log_values)
    lines = path.read_text().splitlines()
    assert lines[0] == "dim=2"
    assert lines[1] == "axis=0 min=-3 max=3 count=7"
    back = read_grid_file(path)
    np.testing.assert_array_equal(back.log_values, table.log_values)
    np.testing.assert_array_equal(back.grid.counts, grid.counts)


def test_grid_file_malformed(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dim=1\naxis=0 min=0 max=1\n0\n0\n")
    with pytest.raises(InvalidArgumentError):
        read_grid_file(path)
