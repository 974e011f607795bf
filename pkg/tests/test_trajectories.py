import math

import numpy as np
import pytest

from fpk import rng
from fpk.errors import InvalidArgumentError, SimulationError
from fpk.grids import Box
from fpk.systems import get_system
from fpk.trajectories import (
    EmConfig,
    escape_fraction,
    read_batch,
    run_ensemble,
    simulate_batch,
    write_batch,
)


def zero(x):
    return np.zeros_like(x)


def test_emconfig_validation():
    with pytest.raises(InvalidArgumentError):
        EmConfig(0.0, 5, 10)
    with pytest.raises(InvalidArgumentError):
        EmConfig(1.0, 0, 10)
    assert EmConfig(1.0, 4, 2).h == 0.25


def test_no_dynamics_keeps_origin():
    b = simulate_batch(zero, 0.0, [0.3, -0.2], EmConfig(1.0, 5, 7), Box.cube(-1, 1, 2))
    assert b.states.shape == (7, 6, 2)
    np.testing.assert_array_equal(b.states, np.broadcast_to([0.3, -0.2], b.states.shape))
    assert b.inside_omega.all()
    assert all(escape_fraction(b, j) == 0 for j in range(6))


def test_ou_moments():
    ou = get_system("ou")
    b = simulate_batch(ou.drift, ou.sigma, [3.0], EmConfig(1.0, 1000, 100000, 11),
                       Box.unbounded(1))
    xT = b.states[:, -1, 0]
    se = xT.std() / math.sqrt(xT.size)
    assert abs(xT.mean() - 3 * math.exp(-1)) < 3 * se
    assert xT.var() == pytest.approx(1 - math.exp(-2), rel=0.05)


def test_thread_and_chunk_partition_do_not_matter():
    ring = get_system("ring2d")
    cfg = EmConfig(0.5, 20, 3000, 5)
    om = Box.cube(-1.3, 1.3, 2)
    a = simulate_batch(ring.drift, ring.sigma, [0.5, 0.5], cfg, om, "drop", threads=1)
    b = simulate_batch(ring.drift, ring.sigma, [0.5, 0.5], cfg, om, "drop", threads=8, chunk=337)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.inside_omega, b.inside_omega)


def test_inside_flags_are_prefix_conjunctive():
    ring = get_system("ring2d")
    b = simulate_batch(ring.drift, ring.sigma, [0.0, 0.0], EmConfig(1.0, 50, 2000, 1),
                       Box.cube(-1.2, 1.2, 2), "drop")
    assert b.inside_omega[:, 0].all()
    assert np.all(np.diff(b.inside_omega.astype(int), axis=1) <= 0)
    inside_now = Box.cube(-1.2, 1.2, 2).contains(b.states)
    assert np.all(np.cumprod(inside_now, axis=1).astype(bool) == b.inside_omega)
    assert 0 < escape_fraction(b, 50) < 1


def test_ou_no_escape_from_wide_box():
    ou = get_system("ou")
    b = simulate_batch(ou.drift, ou.sigma, [0.0], EmConfig(1.0, 100, 10000, 2), Box.cube(-10, 10, 1))
    assert escape_fraction(b, 100) == 0.0


def test_escape_fraction_index_checked():
    b = simulate_batch(zero, 0.0, [0.0], EmConfig(1.0, 3, 2), Box.cube(-1, 1, 1))
    with pytest.raises(InvalidArgumentError):
        escape_fraction(b, 4)


def test_nonfinite_state_strict_raises_with_indices():
    def blowup(x):
        return np.where(x > 0.5, np.inf, 0.0)

    with pytest.raises(SimulationError) as err:
        simulate_batch(blowup, 1.0, [0.0], EmConfig(1.0, 20, 50, 3), Box.cube(-5, 5, 1))
    assert err.value.traj_index >= 0 and err.value.step_index >= 1


def test_nonfinite_state_freezes_under_other_policies():
    def blowup(x):
        return np.where(x > 0.5, np.inf, 0.0)

    b = simulate_batch(blowup, 1.0, [0.0], EmConfig(1.0, 20, 50, 3), Box.cube(-5, 5, 1), "drop")
    assert np.all(np.isfinite(b.states))
    bad = ~b.inside_omega[:, -1]
    assert bad.any()
    # a frozen row never moves again
    for i in np.flatnonzero(bad):
        j = int(np.argmin(b.inside_omega[i]))
        assert np.all(b.states[i, j:] == b.states[i, j - 1])


def test_weak_order_sanity():
    ou = get_system("ou")
    exact = 3 * math.exp(-1)
    votes = 0
    for rep in range(10):
        errs = []
        for m in (4, 8):
            b = simulate_batch(ou.drift, ou.sigma, [3.0], EmConfig(1.0, m, 20000, 100 + rep),
                               Box.unbounded(1))
            errs.append(abs(b.states[:, -1, 0].mean() - exact))
        votes += errs[1] < errs[0]
    assert votes >= 6


def test_step_offset_continues_noise_stream():
    keys = rng.derive_keys(rng.stream_root(0, 1), 0, 4)
    om = Box.unbounded(1)
    x0 = np.zeros((4, 1))
    obs = lambda j, x, inside: x.copy()  # noqa: E731
    full = run_ensemble(zero, 1.0, x0, keys, 6, 0.1, om, obs)
    first = run_ensemble(zero, 1.0, x0, keys, 3, 0.1, om, obs)
    second = run_ensemble(zero, 1.0, first[-1], keys, 3, 0.1, om, obs, step0=3)
    np.testing.assert_array_equal(full[-1], second[-1])


def test_batch_dump_round_trip(tmp_path):
    ring = get_system("ring2d")
    b = simulate_batch(ring.drift, ring.sigma, [0.1, 0.2], EmConfig(0.3, 7, 13, 4),
                       Box.cube(-1, 1, 2), "drop")
    path = tmp_path / "b.fktb"
    write_batch(path, b)
    raw = path.read_bytes()
    assert raw[:4] == b"FKTB"
    back = read_batch(path)
    np.testing.assert_array_equal(back.states, b.states)
    np.testing.assert_array_equal(back.inside_omega, b.inside_omega)
    np.testing.assert_array_equal(back.times, b.times)
    np.testing.assert_array_equal(back.origin, b.origin)


def test_read_batch_rejects_garbage(tmp_path):
    path = tmp_path / "x.fktb"
    path.write_bytes(b"nope" + bytes(40))
    with pytest.raises(InvalidArgumentError):
        read_batch(path)
