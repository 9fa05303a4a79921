import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from corehole.trajectory import (GreensTrajectory, GridMismatch, check_uniform, same_grid,
                                 uniform_grid)


def test_uniform_grid():
    t = uniform_grid(0.1, 900.0)
    assert len(t) == 9001 and t[0] == 0.0
    assert t[-1] == pytest.approx(900.0)
    assert check_uniform(t) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        uniform_grid(0.0, 1.0)
    with pytest.raises(ValueError):
        uniform_grid(0.1, -1.0)


def test_grid_checks():
    with pytest.raises(GridMismatch):
        check_uniform(np.array([0.0, 0.1, 0.3]))
    with pytest.raises(GridMismatch):
        check_uniform(np.array([0.0]))
    with pytest.raises(GridMismatch):
        check_uniform(np.array([0.2, 0.1, 0.0]))
    with pytest.raises(GridMismatch):
        same_grid(uniform_grid(0.1, 1.0), uniform_grid(0.1, 2.0))
    same_grid(uniform_grid(0.1, 1.0), np.linspace(0.0, 1.0, 11))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 50))
def test_csv_round_trip_is_exact(tmp_path_factory, seed, n):
    rng = np.random.default_rng(seed)
    t = uniform_grid(0.1, 0.1 * (n - 1))
    g = GreensTrajectory(t, rng.normal(size=n) + 1j * rng.normal(size=n), "tdcc",
                         rng.normal(size=n) + 1j * rng.normal(size=n))
    path = tmp_path_factory.mktemp("traj") / "tdcc_greens.csv"
    g.to_csv(path)
    back = GreensTrajectory.from_csv(path)
    assert back.method_tag == "tdcc"
    assert np.array_equal(back.times, g.times)
    assert np.array_equal(back.g, g.g)
    assert np.array_equal(back.energy, g.energy)


def test_csv_without_energy(tmp_path):
    g = GreensTrajectory(uniform_grid(0.5, 2.0), np.ones(5), "exact")
    g.to_csv(tmp_path / "exact_greens.csv")
    back = GreensTrajectory.from_csv(tmp_path / "exact_greens.csv")
    assert back.energy is None and back.method_tag == "exact"


def test_addition():
    t = uniform_grid(0.1, 1.0)
    a = GreensTrajectory(t, np.ones(11), "a")
    b = GreensTrajectory(t, 1j * np.ones(11), "b")
    assert np.array_equal((a + b).g, np.ones(11) + 1j)
    with pytest.raises(GridMismatch):
        a + GreensTrajectory(uniform_grid(0.1, 2.0), np.ones(21), "c")
    with pytest.raises(GridMismatch):
        GreensTrajectory(t, np.ones(3), "d")
