import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import kkt_enumeration, projected_gradient
from proxcontact.qp import ActiveSetSolver, QpError, QpProblem, solve


def random_instance(rng, n, m):
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    return H, rng.normal(size=n), rng.normal(size=(m, n)), rng.normal(size=m)


def test_unconstrained_example():
    sol = solve(QpProblem(np.eye(2), -np.ones(2)))
    np.testing.assert_allclose(sol.x, [1, 1], atol=1e-12)
    assert sol.active_set == () and not sol.slack_used


def test_single_bound_example():
    sol = solve(QpProblem(np.eye(2), -np.ones(2), [[1.0, 0.0]], [0.0]))
    np.testing.assert_allclose(sol.x, [0, 1], atol=1e-12)
    assert sol.active_set == (0,)
    assert sol.multipliers[0] == pytest.approx(1.0)


def test_four_by_two_instances_match_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        H, g, A, b = random_instance(rng, 4, 2)
        sol = solve(QpProblem(H, g, A, b))
        f_ref, _ = kkt_enumeration(H, g, A, b)
        assert abs(sol.objective - f_ref) <= 1e-6


def test_projected_gradient_agrees():
    rng = np.random.default_rng(5)
    for _ in range(10):
        H, g, A, b = random_instance(rng, 4, 2)
        f_pg, _ = projected_gradient(H, g, A, b)
        assert abs(solve(QpProblem(H, g, A, b)).objective - f_pg) <= 1e-6


@given(st.integers(1, 7), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_kkt_conditions(n, m, seed):
    H, g, A, b = random_instance(np.random.default_rng(seed), n, m)
    sol = solve(QpProblem(H, g, A, b))
    if sol.slack_used:
        return
    lam = sol.multipliers
    assert np.all(A @ sol.x <= b + 1e-8)
    assert np.all(lam >= -1e-10)
    np.testing.assert_allclose(H @ sol.x + g + A.T @ lam, 0, atol=1e-8)
    np.testing.assert_allclose(lam * (A @ sol.x - b), 0, atol=1e-8)


@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_unconstrained_is_linear_solve(n, seed):
    H, g, _, _ = random_instance(np.random.default_rng(seed), n, 0)
    np.testing.assert_allclose(solve(QpProblem(H, g)).x, -np.linalg.solve(H, g), atol=1e-9)


@given(st.integers(1, 7), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_extra_constraint_never_lowers_objective(n, m, seed):
    rng = np.random.default_rng(seed)
    H, g, A, b = random_instance(rng, n, m + 1)
    fewer = solve(QpProblem(H, g, A[:m], b[:m]))
    more = solve(QpProblem(H, g, A, b))
    if not more.slack_used:
        assert more.objective >= fewer.objective - 1e-9


@given(st.integers(1, 7), st.integers(0, 3), st.integers(0, 2**32 - 1))
def test_deterministic(n, m, seed):
    prob = QpProblem(*random_instance(np.random.default_rng(seed), n, m))
    a, b = solve(prob), solve(prob)
    assert np.array_equal(a.x, b.x) and a.active_set == b.active_set


def test_warm_start_matches_cold_start():
    rng = np.random.default_rng(11)
    solver = ActiveSetSolver()
    H, g, A, b = random_instance(rng, 5, 3)
    for _ in range(20):
        g = g + 0.01 * rng.normal(size=5)
        warm, cold = solver.solve(QpProblem(H, g, A, b)), solve(QpProblem(H, g, A, b))
        assert warm.objective == pytest.approx(cold.objective, abs=1e-9)


def test_tie_breaking_lowest_index_first():
    # two identical rows violated equally: only the first enters
    sol = solve(QpProblem(np.eye(2), -np.ones(2), [[1.0, 0.0], [1.0, 0.0]], [0.0, 0.0]))
    assert sol.active_set == (0,)


def test_infeasible_falls_back_to_slack():
    sol = solve(QpProblem(np.eye(1), np.zeros(1), [[1.0], [-1.0]], [-1.0, -1.0]))
    assert sol.slack_used
    assert np.all(np.isfinite(sol.x))
    assert abs(sol.x[0]) < 1e-6


def test_non_pd_hessian_is_an_error():
    with pytest.raises(QpError):
        solve(QpProblem(np.diag([1.0, -1.0]), np.zeros(2)))
    with pytest.raises(QpError):
        solve(QpProblem([[1.0, 0.5], [0.0, 1.0]], np.zeros(2)))


def test_shape_errors():
    with pytest.raises(QpError):
        QpProblem(np.eye(3), np.zeros(2))
    with pytest.raises(QpError):
        QpProblem(np.eye(2), np.zeros(2), np.zeros((2, 2)), np.zeros(3))
