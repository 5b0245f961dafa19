import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from enroll_opt.design.simplex import UnboundedLPError, solve_lp
from enroll_opt.errors import InfeasibleError


def test_knapsack_relaxation():
    # cheapest per unit of coverage fills first
    res = solve_lp([3.0, 1.0, 2.0], A_ub=[[-1.0, -1.0, -1.0]], b_ub=[-5.0], upper=[10, 2, 10])
    assert np.allclose(res.x, [0, 2, 3])
    assert res.objective == pytest.approx(8.0)


def test_tie_breaks_to_lowest_index():
    res = solve_lp([1.0, 1.0], A_ub=[[-1.0, -1.0]], b_ub=[-1.0], upper=[5, 5])
    assert np.allclose(res.x, [1, 0])


def test_equality_and_lower_bounds():
    res = solve_lp([1.0, 2.0, 3.0], A_eq=[[1, 1, 1]], b_eq=[6], lower=[1, 1, 1], upper=[2, 5, 5])
    assert np.allclose(res.x, [2, 3, 1])


def test_no_rows():
    res = solve_lp([1.0, -1.0], lower=[0, 0], upper=[3, 4])
    assert np.allclose(res.x, [0, 4])


def test_infeasible():
    with pytest.raises(InfeasibleError):
        solve_lp([1.0], A_ub=[[-1.0]], b_ub=[-5.0], upper=[2.0])


def test_unbounded():
    with pytest.raises(UnboundedLPError):
        solve_lp([-1.0, 0.0], A_ub=[[0.0, 1.0]], b_ub=[1.0])


@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_matches_reference_solver(seed, n, m):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.5, 5.0, n)
    A = -rng.uniform(0.1, 2.0, (m, n))
    upper = rng.integers(1, 8, n).astype(float)
    # right-hand sides reachable at the upper bounds
    b = (A @ upper) * rng.uniform(0.2, 0.9, m)
    ours = solve_lp(c, A_ub=A, b_ub=b, upper=upper)
    ref = linprog(c, A_ub=A, b_ub=b, bounds=list(zip(np.zeros(n), upper)), method="highs")
    assert ref.status == 0
    assert ours.objective == pytest.approx(ref.fun, rel=1e-9, abs=1e-9)
    assert np.all(A @ ours.x <= b + 1e-9)
    assert np.all(ours.x >= -1e-12) and np.all(ours.x <= upper + 1e-12)
