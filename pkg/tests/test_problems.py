import numpy as np
import pytest

from crossmesh_pod.problems import PRESETS, make_problem


def _fd_forcing(prob, t, x, h=1e-4):
    """f = y_t - Laplace(y) + c y^3 by central differences on the analytic solution."""
    y = prob.analytic
    e0, e1 = np.array([h, 0.0]), np.array([0.0, h])
    yt = (y(t + h, x) - y(t - h, x)) / (2 * h)
    lap = sum((y(t, x + e) - 2 * y(t, x) + y(t, x - e)) / h ** 2 for e in (e0, e1))
    return yt - lap + prob.c * y(t, x) ** 3


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_forcing_matches_finite_differences(name, rng):
    prob = make_problem(name)
    x = rng.uniform(0.1, 0.9, (25, 2))
    for t in (0.2, 0.7):
        f = prob.forcing(t, x)
        ref = _fd_forcing(prob, t, x)
        assert np.allclose(f, ref, rtol=1e-5, atol=1e-5 * max(1.0, np.abs(ref).max()))


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_solution_vanishes_on_boundary_and_matches_initial(name, rng):
    prob = make_problem(name)
    s = rng.uniform(0, 1, 20)
    edges = np.concatenate([np.column_stack([s, 0 * s]), np.column_stack([s, 0 * s + 1]),
                            np.column_stack([0 * s, s]), np.column_stack([0 * s + 1, s])])
    for t in (0.0, 0.5):
        assert np.abs(prob.analytic(t, edges)).max() < 1e-12
    x = rng.uniform(0, 1, (10, 2))
    assert np.allclose(prob.initial(x), prob.analytic(0.0, x))


def test_example_6_3_solution():
    prob = make_problem("example-6-3")
    x = np.array([[0.3, 0.6]])
    t = 0.4
    expect = np.sin(np.pi * 0.3) * np.sin(np.pi * 0.6) * np.cos(2 * np.pi * t * 0.3)
    assert prob.analytic(t, x)[0] == pytest.approx(expect, rel=1e-14)
