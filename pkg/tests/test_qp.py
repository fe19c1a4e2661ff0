import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compcbf.errors import InputError
from compcbf.qp import KKT_TOL, QpProblem, QpSolver, QpStatus, kkt_residual, solve
from compcbf.verify import grid_qp_oracle, random_qp


def test_unconstrained_inside_box():
    prob = QpProblem.with_box([1.0, 0.0], bound=3.0)
    sol = solve(prob)
    assert sol.optimal and sol.u.tolist() == [1.0, 0.0] and sol.active_set == ()
    assert kkt_residual(prob, sol.u, np.zeros(4)) == 0.0


def test_single_halfspace_projection():
    prob = QpProblem.with_box([1.0, 0.0], [([1.0, 0.0], -2.0)], bound=3.0)
    sol = solve(prob)
    assert sol.optimal
    np.testing.assert_allclose(sol.u, [2.0, 0.0])
    assert sol.active_set == (0,)
    # stationarity 2(u - u_hat) = lam a gives lam = 2
    lam = np.zeros(5)
    lam[0] = 2.0
    assert kkt_residual(prob, sol.u, lam) <= 1e-10
    assert kkt_residual(prob, sol.u + [0.1, 0.0], lam) > 0.01
    assert kkt_residual(prob, sol.u + [0.0, 0.1], lam) > 0.01


def test_kkt_residual_dimension_checks():
    prob = QpProblem.with_box([1.0, 0.0], bound=3.0)
    with pytest.raises(InputError):
        kkt_residual(prob, [0.0], np.zeros(4))
    with pytest.raises(InputError):
        kkt_residual(prob, [0.0, 0.0], np.zeros(3))


def test_problem_validation():
    with pytest.raises(InputError):
        QpProblem([0, 0], [[1, 0]], [0, 1], -1, 1)
    with pytest.raises(InputError):
        QpProblem([0, np.nan], np.zeros((0, 2)), [], -1, 1)
    with pytest.raises(InputError):
        QpProblem([0, 0], np.zeros((0, 2)), [], 1, 1)


def test_box_clipping():
    sol = solve(QpProblem.with_box([5.0, -5.0, 0.2], bound=1.0))
    assert sol.optimal and sol.u.tolist() == [1.0, -1.0, 0.2]
    assert sol.kkt_residual < KKT_TOL


@pytest.mark.parametrize("rows", [
    [([1.0, 0.0], -2.0)],                        # needs u_x >= 2 in a unit box
    [([1.0, 1.0], -0.5), ([-1.0, -1.0], -0.5)],  # u_x + u_y >= 0.5 and <= -0.5
])
def test_infeasible_problems(rows):
    sol = solve(QpProblem.with_box([0.0, 0.0], rows, bound=1.0))
    assert sol.status is QpStatus.INFEASIBLE and not sol.optimal
    assert sol.certificate  # ids of a jointly infeasible subset
    n, b = QpProblem.with_box([0.0, 0.0], rows, bound=1.0).constraint_matrix()
    sub_n, sub_b = n[list(sol.certificate)], b[list(sol.certificate)]
    # no box point satisfies the certificate rows
    g = np.linspace(-1, 1, 201)
    pts = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    assert not np.any(np.all(pts @ sub_n.T - sub_b >= -1e-9, axis=1))


def test_iteration_limit_reports_best_iterate(rng):
    prob = random_qp(rng, n_ineq=3)
    while np.all(prob.slacks(prob.nominal) >= 0):
        prob = random_qp(rng, n_ineq=3)
    sol = QpSolver(max_iter=0).solve(prob)
    assert sol.status is QpStatus.ITERATION_LIMIT
    assert sol.u.shape == (4,)


def test_grid_oracle_and_kkt_on_random_problems(rng):
    gaps = []
    for _ in range(60):
        prob = random_qp(rng)
        sol = solve(prob)
        best, _ = grid_qp_oracle(prob)
        if not sol.optimal:
            assert not math.isfinite(best)
            continue
        assert sol.kkt_residual < KKT_TOL
        assert np.all(prob.slacks(sol.u) >= -1e-8)
        assert np.all((sol.u >= prob.lower) & (sol.u <= prob.upper))
        assert prob.objective(sol.u) <= best + 1e-6
        gaps.append(best - prob.objective(sol.u))
    assert max(gaps) < 1e-3


def test_feasible_nominal_returned_unchanged(rng):
    for _ in range(100):
        prob = random_qp(rng)
        if np.all(prob.slacks(prob.nominal) >= 0):
            sol = solve(prob)
            assert sol.u is not prob.nominal
            assert np.array_equal(sol.u, prob.nominal) and sol.active_set == ()


def test_single_constraint_path_matches_dual_method(rng):
    """A redundant always-slack row forces the general path on the same problem."""
    for _ in range(200):
        m = int(rng.integers(2, 7))
        a = rng.normal(size=m)
        c = float(rng.normal())
        u_hat = rng.normal(size=m)
        one = QpProblem.with_box(u_hat, [(a, c)], bound=1.0)
        two = QpProblem.with_box(u_hat, [(a, c), (np.zeros(m), 10.0)], bound=1.0)
        s1, s2 = solve(one), solve(two)
        assert s1.status == s2.status
        if s1.optimal:
            np.testing.assert_allclose(s1.u, s2.u, atol=1e-9)
            assert s1.kkt_residual < KKT_TOL


def test_warm_start_matches_cold_start(rng):
    warm = QpSolver()
    prob = random_qp(rng)
    for _ in range(100):
        # small drift of the nominal, as between filter cycles
        prob = QpProblem(prob.nominal + rng.normal(scale=0.005, size=4), prob.a, prob.c,
                         prob.lower, prob.upper)
        a, b = warm.solve(prob), QpSolver().solve(prob)
        assert a.status == b.status
        if a.optimal:
            np.testing.assert_allclose(a.u, b.u, atol=1e-9)
    warm.reset()
    assert warm._warm is None


def test_deterministic(rng):
    prob = random_qp(rng)
    a, b = solve(prob), solve(prob)
    assert a.u.tobytes() == b.u.tobytes() and a.active_set == b.active_set


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_optimal_solutions_are_feasible_and_stationary(data):
    seed = data.draw(st.integers(0, 2**32 - 1))
    k = data.draw(st.integers(1, 5))
    rng = np.random.default_rng(seed)
    prob = random_qp(rng, dim=data.draw(st.integers(2, 6)), n_ineq=k, bound=1.0, spread=0.3)
    sol = solve(prob)
    if sol.optimal:
        assert np.all(prob.slacks(sol.u) >= -1e-8)
        assert sol.kkt_residual < KKT_TOL * max(1.0, np.abs(sol.multipliers).max())
