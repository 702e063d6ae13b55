import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from oracles import box_qp_enumerate, random_spd
from rmrom.qp import BoxBounds, QPError, kkt_residual, solve_box_qp


@pytest.mark.parametrize("seed", range(40))
def test_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 7))
    H = random_spd(rng, n)
    g = rng.standard_normal(n) * 3
    lo = -rng.random(n)
    hi = rng.random(n)
    x = solve_box_qp(H, g, BoxBounds(lo, hi))
    np.testing.assert_allclose(x, box_qp_enumerate(H, g, lo, hi), atol=1e-8)


def test_one_sided_bounds():
    H = np.array([[2.0, 0.5], [0.5, 1.0]])
    g = np.array([-1.0, 2.0])
    x = solve_box_qp(H, g, BoxBounds(0.0, np.inf))
    np.testing.assert_allclose(x, box_qp_enumerate(H, g, np.zeros(2), np.full(2, np.inf)), atol=1e-12)
    assert x[0] == 0.0


def test_hand_example_diagonal():
    # separable: x_i = clip(g_i / h_i)
    H = np.diag([1.0, 2.0, 4.0])
    g = np.array([3.0, -1.0, 1.0])
    x = solve_box_qp(H, g, BoxBounds(0.0, 1.0))
    np.testing.assert_array_equal(x, [1.0, 0.0, 0.25])


def test_unbounded_is_linear_solve(rng):
    H = random_spd(rng, 5)
    g = rng.standard_normal(5)
    np.testing.assert_allclose(solve_box_qp(H, g), np.linalg.solve(H, g), atol=1e-12)


def test_sparse_input_and_warm_start(rng):
    H = sp.diags([-1.0, 4.0, -1.0], [-1, 0, 1], shape=(30, 30)).tocsr()
    g = rng.standard_normal(30) * 4
    x = solve_box_qp(H, g, BoxBounds(0.0, 1.0))
    x2 = solve_box_qp(H, g, BoxBounds(0.0, 1.0), x0=x)
    np.testing.assert_allclose(x, x2, atol=1e-12)


def test_rejects_indefinite():
    with pytest.raises(QPError):
        solve_box_qp(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2), BoxBounds(-1.0, 1.0))


def test_rejects_bad_shape_and_nan():
    with pytest.raises(QPError):
        solve_box_qp(np.eye(2), np.ones(3))
    with pytest.raises(QPError):
        solve_box_qp(np.eye(2), np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        BoxBounds(1.0, 0.0)


@given(seed=st.integers(0, 2**31), n=st.integers(1, 12))
def test_kkt_and_feasibility(seed, n):
    rng = np.random.default_rng(seed)
    H = random_spd(rng, n, cond=1e3)
    g = rng.standard_normal(n) * 5
    lo, hi = -rng.random(n), rng.random(n)
    x = solve_box_qp(H, g, BoxBounds(lo, hi))
    assert np.all(x >= lo) and np.all(x <= hi)
    assert kkt_residual(H, g, x, lo, hi) <= 1e-9 * max(np.abs(g).max(), 1)


@given(seed=st.integers(0, 2**31), n=st.integers(1, 6))
def test_optimal_against_feasible_perturbations(seed, n):
    rng = np.random.default_rng(seed)
    H = random_spd(rng, n)
    g = rng.standard_normal(n)
    x = solve_box_qp(H, g, BoxBounds(0.0, 1.0))
    f = lambda z: 0.5 * z @ H @ z - g @ z
    for _ in range(20):
        z = np.clip(x + 0.1 * rng.standard_normal(n), 0, 1)
        assert f(x) <= f(z) + 1e-12
