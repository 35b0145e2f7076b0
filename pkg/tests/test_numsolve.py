import numpy as np
import pytest
from hypothesis import given, strategies as st

from l1dpc.numsolve import (INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, QuadraticProgram,
                            SolveResult, check_kkt, numeric_rank, problem_from_json,
                            problem_to_json, solve_lp, solve_qp)
from oracles import box_qp_fista, lp_vertex_enumeration, result_kkt


def test_lp_single_bound():
    res = solve_lp(LinearProgram([1.0], lower=[1.0]))
    assert res.status == OPTIMAL
    assert res.primal[0] == pytest.approx(1.0)
    assert res.objective == pytest.approx(1.0)


def test_lp_infeasible():
    res = solve_lp(LinearProgram([0.0], ineq_matrix=[[1.0]], ineq_rhs=[-1.0], lower=[0.0]))
    assert res.status == INFEASIBLE


def test_lp_unbounded():
    res = solve_lp(LinearProgram([-1.0], lower=[0.0]))
    assert res.status == UNBOUNDED


@pytest.mark.parametrize("seed", range(15))
def test_lp_matches_vertex_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 6
    A = np.vstack([rng.standard_normal((6, n)), np.eye(n), -np.eye(n)])
    b = np.concatenate([rng.uniform(0.5, 2.0, 6), np.full(2 * n, 3.0)])
    c = rng.standard_normal(n)
    best, _ = lp_vertex_enumeration(c, A, b)
    res = solve_lp(LinearProgram(c, ineq_matrix=A, ineq_rhs=b))
    assert res.status == OPTIMAL
    assert res.objective == pytest.approx(best, abs=1e-8)
    assert result_kkt(LinearProgram(c, ineq_matrix=A, ineq_rhs=b), res) <= 1e-7


def test_lp_strong_duality():
    rng = np.random.default_rng(3)
    for _ in range(20):
        G = rng.standard_normal((3, 7))
        e = G @ rng.uniform(0.1, 1.0, 7)
        c = rng.uniform(0.1, 2.0, 7)
        lp = LinearProgram(c, eq_matrix=G, eq_rhs=e, lower=np.zeros(7))
        res = solve_lp(lp)
        dual_obj = -res.duals_eq @ e
        assert res.objective == pytest.approx(dual_obj, abs=1e-6)


def test_qp_unconstrained():
    res = solve_qp(QuadraticProgram([[2.0]], [-2.0]))
    assert res.primal[0] == pytest.approx(1.0)
    # (x-1)^2 = x^2 - 2x + 1; objective reported without the constant
    assert res.objective + 1.0 == pytest.approx(0.0, abs=1e-12)


def test_qp_equality():
    res = solve_qp(QuadraticProgram(2 * np.eye(2), [0.0, 0.0], eq_matrix=[[1.0, 1.0]], eq_rhs=[2.0]))
    np.testing.assert_allclose(res.primal, [1.0, 1.0], atol=1e-12)
    assert res.objective == pytest.approx(2.0)


@pytest.mark.parametrize("seed", range(10))
def test_qp_matches_projected_gradient(seed):
    rng = np.random.default_rng(100 + seed)
    M = rng.standard_normal((5, 5))
    H = M @ M.T + 0.5 * np.eye(5)
    f = 3 * rng.standard_normal(5)
    lo, hi = -np.ones(5), np.ones(5)
    ref = box_qp_fista(H, f, lo, hi)
    qp = QuadraticProgram(H, f, ineq_matrix=np.eye(5), ineq_rhs=hi, lower=lo)
    res = solve_qp(qp)
    assert res.status == OPTIMAL
    np.testing.assert_allclose(res.primal, ref, atol=1e-7)
    assert result_kkt(qp, res) <= 1e-7


def test_qp_zero_hessian_agrees_with_lp():
    rng = np.random.default_rng(7)
    for _ in range(30):
        x0 = rng.uniform(0.0, 1.0, 6)
        G = rng.standard_normal((2, 6))
        e = G @ x0
        c = rng.uniform(0.1, 1.0, 6)
        A = rng.standard_normal((2, 6))
        b = A @ x0 + 0.5
        lp = LinearProgram(c, A, b, G, e, np.zeros(6))
        qp = QuadraticProgram(np.zeros((6, 6)), c, A, b, G, e, np.zeros(6))
        r1, r2 = solve_lp(lp), solve_qp(qp)
        assert r1.status == r2.status == OPTIMAL
        assert r2.objective == pytest.approx(r1.objective, abs=1e-8)


def test_qp_infeasible_and_unbounded():
    res = solve_qp(QuadraticProgram(np.eye(1), [0.0], [[1.0]], [-1.0], lower=[0.0]))
    assert res.status == INFEASIBLE
    res = solve_qp(QuadraticProgram(np.diag([1.0, 0.0]), [0.0, -1.0]))
    assert res.status == UNBOUNDED


def test_qp_rejects_nonsymmetric_or_indefinite():
    with pytest.raises(ValueError):
        QuadraticProgram([[1.0, 1.0], [0.0, 1.0]], [0.0, 0.0])
    with pytest.raises(ValueError):
        QuadraticProgram([[-1.0]], [0.0])


def test_qp_redundant_equalities():
    G = np.array([[1.0, 1.0], [2.0, 2.0]])
    res = solve_qp(QuadraticProgram(2 * np.eye(2), [0.0, 0.0], eq_matrix=G, eq_rhs=[2.0, 4.0]))
    np.testing.assert_allclose(res.primal, [1.0, 1.0], atol=1e-10)
    res = solve_qp(QuadraticProgram(2 * np.eye(2), [0.0, 0.0], eq_matrix=G, eq_rhs=[2.0, 5.0]))
    assert res.status == INFEASIBLE


def test_check_kkt_hand_built():
    # min x^2 s.t. x >= 1: x = 1, multiplier 2
    qp = QuadraticProgram([[2.0]], [0.0], lower=[1.0])
    good = SolveResult(OPTIMAL, np.array([1.0]), np.zeros(0), np.zeros(0), np.array([2.0]), 1.0)
    rep = check_kkt(qp, good)
    assert rep.stationarity == rep.primal_feas == rep.complementarity == 0.0
    bad = SolveResult(OPTIMAL, np.array([1.1]), np.zeros(0), np.zeros(0), np.array([2.0]), 1.21)
    assert check_kkt(qp, bad).stationarity == pytest.approx(0.2)


def test_solver_reports_x_ge_one_dual():
    res = solve_qp(QuadraticProgram([[2.0]], [0.0], lower=[1.0]))
    assert res.duals_lower[0] == pytest.approx(2.0)
    assert res.kkt.passed(1e-7)


def test_numeric_rank_examples():
    assert numeric_rank(np.eye(3)) == 3
    assert numeric_rank([[1.0, 2.0], [2.0, 4.0]]) == 1


@given(st.integers(0, 2**32 - 1))
def test_numeric_rank_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    k = rng.integers(1, 5)
    M = rng.standard_normal((6, k)) @ rng.standard_normal((k, 7))
    P = M[rng.permutation(6)][:, rng.permutation(7)]
    assert numeric_rank(M) == numeric_rank(P) == k


def test_problem_json_round_trip():
    qp = QuadraticProgram(2 * np.eye(2), [1.0, -1.0], [[1.0, 0.0]], [3.0], [[1.0, 1.0]], [1.0],
                          [0.0, -np.inf])
    back = problem_from_json(problem_to_json(qp))
    for name in ("hessian", "linear", "ineq_matrix", "ineq_rhs", "eq_matrix", "eq_rhs", "lower"):
        np.testing.assert_array_equal(getattr(back, name), getattr(qp, name))
