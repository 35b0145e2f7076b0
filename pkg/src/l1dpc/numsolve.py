"""Dense LP/QP solving with independently checkable KKT certificates.

Objective convention, fixed across the package::

    minimize  1/2 x^T H x + f^T x
    s.t.      A x <= b,   G x = e,   x >= lb

Linear programs are solved with the HiGHS dual simplex (vertex solutions),
quadratic programs with a primal active-set method written for the small,
possibly semidefinite problems that arise here.  Every ``optimal`` result has
passed :func:`check_kkt` before it is returned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np
from scipy.optimize import linprog

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class ToleranceConfig:
    """Tolerances shared by every module."""

    kkt: float = 1e-7
    feas: float = 1e-8
    rank_rtol: Optional[float] = None  # None: max(rows, cols) * eps
    dup: float = 1e-10
    sym: float = 1e-10
    psd: float = 1e-8


DEFAULT_TOL = ToleranceConfig()


class SolverError(RuntimeError):
    """Raised by callers that need an optimal point and did not get one."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(message or status)


def _as_2d(M, ncols: int) -> np.ndarray:
    if M is None:
        return np.zeros((0, ncols))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, ncols))
    return M


def _as_1d(v, n: int, fill: float = 0.0) -> np.ndarray:
    if v is None:
        return np.full(n, fill)
    return np.asarray(v, dtype=float).reshape(-1)


@dataclass
class LinearProgram:
    cost: np.ndarray
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    lower: np.ndarray = None

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float).reshape(-1)
        n = self.cost.size
        self.ineq_matrix = _as_2d(self.ineq_matrix, n)
        self.ineq_rhs = _as_1d(self.ineq_rhs, self.ineq_matrix.shape[0])
        self.eq_matrix = _as_2d(self.eq_matrix, n)
        self.eq_rhs = _as_1d(self.eq_rhs, self.eq_matrix.shape[0])
        self.lower = _as_1d(self.lower, n, fill=-np.inf)
        _check_blocks(self, n)

    @property
    def n_vars(self) -> int:
        return self.cost.size

    @property
    def hessian(self) -> np.ndarray:
        return np.zeros((self.n_vars, self.n_vars))

    @property
    def linear(self) -> np.ndarray:
        return self.cost


@dataclass
class QuadraticProgram:
    hessian: np.ndarray
    linear: np.ndarray
    ineq_matrix: np.ndarray = None
    ineq_rhs: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_rhs: np.ndarray = None
    lower: np.ndarray = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(-1)
        n = self.linear.size
        self.hessian = np.asarray(self.hessian, dtype=float).reshape(n, n)
        self.ineq_matrix = _as_2d(self.ineq_matrix, n)
        self.ineq_rhs = _as_1d(self.ineq_rhs, self.ineq_matrix.shape[0])
        self.eq_matrix = _as_2d(self.eq_matrix, n)
        self.eq_rhs = _as_1d(self.eq_rhs, self.eq_matrix.shape[0])
        self.lower = _as_1d(self.lower, n, fill=-np.inf)
        _check_blocks(self, n)
        H = self.hessian
        scale = 1.0 + np.abs(H).max(initial=0.0)
        if np.abs(H - H.T).max(initial=0.0) > DEFAULT_TOL.sym * scale:
            raise ValueError("hessian is not symmetric")
        if n and np.linalg.eigvalsh(0.5 * (H + H.T)).min() < -DEFAULT_TOL.psd * scale:
            raise ValueError("hessian is not positive semidefinite")

    @property
    def n_vars(self) -> int:
        return self.linear.size

    @property
    def cost(self) -> np.ndarray:
        return self.linear


Problem = Union[LinearProgram, QuadraticProgram]


def _check_blocks(prob, n: int) -> None:
    for name, M, v in (("ineq", prob.ineq_matrix, prob.ineq_rhs),
                       ("eq", prob.eq_matrix, prob.eq_rhs)):
        if M.shape[1] != n:
            raise ValueError(f"{name}_matrix has {M.shape[1]} columns, expected {n}")
        if M.shape[0] != v.size:
            raise ValueError(f"{name}_matrix has {M.shape[0]} rows but {name}_rhs has {v.size}")
    if prob.lower.size != n:
        raise ValueError(f"lower has length {prob.lower.size}, expected {n}")


@dataclass
class KKTReport:
    """Raw residuals (infinity norm) plus the data scale used for the pass test."""

    stationarity: float
    primal_feas: float
    complementarity: float
    dual_feas: float
    scale: float

    def max_scaled(self) -> float:
        return max(self.stationarity, self.primal_feas,
                   self.complementarity, self.dual_feas) / self.scale

    def passed(self, tol: float = DEFAULT_TOL.kkt) -> bool:
        return self.max_scaled() <= tol


@dataclass
class SolveResult:
    status: str
    primal: np.ndarray
    duals_ineq: np.ndarray
    duals_eq: np.ndarray
    duals_lower: np.ndarray
    objective: float
    kkt: Optional[KKTReport] = None
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def problem_scale(prob: Problem) -> float:
    parts = [prob.hessian, prob.linear, prob.ineq_matrix, prob.ineq_rhs,
             prob.eq_matrix, prob.eq_rhs]
    lb = prob.lower[np.isfinite(prob.lower)]
    parts.append(lb)
    return float(1.0 + max((np.abs(p).max(initial=0.0) for p in parts), default=0.0))


def check_kkt(prob: Problem, result: SolveResult) -> KKTReport:
    """Recompute KKT residuals from the problem data and the reported pair.

    Lagrangian sign convention: ``Hx + f + A^T mu + G^T nu - rho = 0`` with
    ``mu >= 0`` on ``Ax <= b`` and ``rho >= 0`` on ``x >= lb``.
    """
    x = np.asarray(result.primal, dtype=float)
    mu = np.asarray(result.duals_ineq, dtype=float)
    nu = np.asarray(result.duals_eq, dtype=float)
    rho = np.asarray(result.duals_lower, dtype=float)
    H, f = prob.hessian, prob.linear
    A, b, G, e, lb = prob.ineq_matrix, prob.ineq_rhs, prob.eq_matrix, prob.eq_rhs, prob.lower

    grad = H @ x + f + A.T @ mu + G.T @ nu - rho
    stationarity = np.abs(grad).max(initial=0.0)

    finite = np.isfinite(lb)
    slack_ineq = b - A @ x
    slack_lb = np.where(finite, x - np.where(finite, lb, 0.0), np.inf)
    primal = max(np.maximum(-slack_ineq, 0.0).max(initial=0.0),
                 np.abs(G @ x - e).max(initial=0.0),
                 np.maximum(-slack_lb[finite], 0.0).max(initial=0.0))

    comp = max(np.abs(mu * slack_ineq).max(initial=0.0),
               np.abs(rho[finite] * slack_lb[finite]).max(initial=0.0))
    # multipliers on infinite bounds must vanish
    dual = max(np.maximum(-mu, 0.0).max(initial=0.0),
               np.maximum(-rho, 0.0).max(initial=0.0),
               np.abs(rho[~finite]).max(initial=0.0))
    return KKTReport(float(stationarity), float(primal), float(comp), float(dual),
                     problem_scale(prob))


def _certify(prob: Problem, res: SolveResult, tol: ToleranceConfig) -> SolveResult:
    if res.status != OPTIMAL:
        return res
    rep = check_kkt(prob, res)
    res = replace(res, kkt=rep)
    if not rep.passed(tol.kkt):
        return replace(res, status=NUMERICAL_FAILURE,
                       message=f"KKT check failed (scaled residual {rep.max_scaled():.3e})")
    return res


def _empty_result(prob: Problem, status: str, message: str = "", iterations: int = 0) -> SolveResult:
    n = prob.n_vars
    return SolveResult(status, np.full(n, np.nan), np.zeros(prob.ineq_matrix.shape[0]),
                       np.zeros(prob.eq_matrix.shape[0]), np.zeros(n), np.nan,
                       iterations=iterations, message=message)


def _highs(cost, A, b, G, e, lb, tol: ToleranceConfig):
    bounds = [(None if not np.isfinite(v) else v, None) for v in lb]
    return linprog(
        cost,
        A_ub=A if A.shape[0] else None, b_ub=b if A.shape[0] else None,
        A_eq=G if G.shape[0] else None, b_eq=e if G.shape[0] else None,
        bounds=bounds, method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10,
                 "dual_feasibility_tolerance": 1e-10,
                 "presolve": True},
    )


def solve_lp(lp: LinearProgram, tol: ToleranceConfig = DEFAULT_TOL) -> SolveResult:
    """Solve an LP with the HiGHS dual simplex and certify the result."""
    res = _highs(lp.cost, lp.ineq_matrix, lp.ineq_rhs, lp.eq_matrix, lp.eq_rhs, lp.lower, tol)
    if res.status == 2:
        return _empty_result(lp, INFEASIBLE, res.message)
    if res.status == 3:
        return _empty_result(lp, UNBOUNDED, res.message)
    if res.status != 0:
        return _empty_result(lp, NUMERICAL_FAILURE, res.message)
    n = lp.n_vars
    mu = -res.ineqlin.marginals if lp.ineq_matrix.shape[0] else np.zeros(0)
    nu = -res.eqlin.marginals if lp.eq_matrix.shape[0] else np.zeros(0)
    rho = np.asarray(res.lower.marginals, dtype=float) if n else np.zeros(0)
    out = SolveResult(OPTIMAL, np.asarray(res.x, dtype=float), np.asarray(mu, dtype=float),
                      np.asarray(nu, dtype=float), rho, float(res.fun),
                      iterations=int(getattr(res, "nit", 0)))
    return _certify(lp, out, tol)


def _independent_rows(M: np.ndarray, rhs: np.ndarray, tol: float):
    """Greedy selection of linearly independent rows; flags inconsistency."""
    if M.shape[0] == 0:
        return np.zeros(0, dtype=int), True
    scale = 1.0 + np.abs(M).max()
    keep: list[int] = []
    Q = np.zeros((M.shape[1], 0))
    consistent = True
    for i in range(M.shape[0]):
        r = M[i] - Q @ (Q.T @ M[i])
        nr = np.linalg.norm(r)
        if nr > tol * scale:
            keep.append(i)
            Q = np.column_stack([Q, r / nr])
    keep = np.array(keep, dtype=int)
    if keep.size < M.shape[0]:
        # dropped rows must be implied by the kept ones
        sol, *_ = np.linalg.lstsq(M[keep], rhs[keep], rcond=None) if keep.size else (np.zeros(M.shape[1]),)
        resid = np.abs(M @ sol - rhs).max()
        consistent = resid <= 1e-9 * (1.0 + np.abs(rhs).max())
    return keep, consistent


def solve_qp(qp: QuadraticProgram, tol: ToleranceConfig = DEFAULT_TOL,
             max_iter: int = 2000) -> SolveResult:
    """Primal active-set method for a convex QP with PSD (possibly zero) Hessian.

    Feasible start from a phase-one simplex vertex.  Zero-curvature directions
    of the reduced Hessian are followed until a constraint blocks; no blocking
    constraint means the problem is unbounded.
    """
    n = qp.n_vars
    H, f = qp.hessian, qp.linear
    G, e = qp.eq_matrix, qp.eq_rhs
    finite = np.isfinite(qp.lower)
    lb_idx = np.flatnonzero(finite)
    # bounds folded into inequality rows: -x_i <= -lb_i
    A = np.vstack([qp.ineq_matrix, -np.eye(n)[lb_idx]]) if lb_idx.size else qp.ineq_matrix
    b = np.concatenate([qp.ineq_rhs, -qp.lower[lb_idx]])
    m_in = qp.ineq_matrix.shape[0]

    eq_keep, consistent = _independent_rows(G, e, 1e-12)
    if not consistent:
        return _empty_result(qp, INFEASIBLE, "inconsistent equality constraints")
    Ge, ee = G[eq_keep], e[eq_keep]

    phase1 = _highs(np.zeros(n), qp.ineq_matrix, qp.ineq_rhs, G, e, qp.lower, tol)
    if phase1.status == 2:
        return _empty_result(qp, INFEASIBLE, phase1.message)
    if phase1.status != 0:
        return _empty_result(qp, NUMERICAL_FAILURE, "phase one: " + phase1.message)
    x = np.asarray(phase1.x, dtype=float)

    scale = problem_scale(qp)
    act_tol = 1e-9 * scale
    # initial working set: active inequalities whose rows stay independent
    work: list[int] = []
    basis = np.linalg.qr(Ge.T)[0] if Ge.shape[0] else np.zeros((n, 0))
    for i in np.flatnonzero(b - A @ x <= act_tol):
        r = A[i] - basis @ (basis.T @ A[i])
        nr = np.linalg.norm(r)
        if nr > 1e-10 * (1.0 + np.linalg.norm(A[i])):
            work.append(int(i))
            basis = np.column_stack([basis, r / nr])
    # snap onto the working set to remove phase-one round-off
    x = _project(x, Ge, ee, A, b, work)

    Hnorm = 1.0 + np.abs(H).max(initial=0.0)
    degenerate_steps = 0
    it = 0
    for it in range(1, max_iter + 1):
        g = H @ x + f
        Aw = np.vstack([Ge, A[work]]) if work else Ge
        Z = _null_space(Aw, n)
        p = np.zeros(n)
        zero_curv = False
        if Z.shape[1]:
            Hr = Z.T @ H @ Z
            w, U = np.linalg.eigh(0.5 * (Hr + Hr.T))
            r = Z.T @ g
            flat = w <= 1e-10 * Hnorm
            r_null = U[:, flat] @ (U[:, flat].T @ r)
            if np.linalg.norm(r_null) > 1e-11 * (1.0 + np.linalg.norm(g)):
                p = -Z @ r_null
                zero_curv = True
            else:
                inv = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, w))
                p = -Z @ (U @ (inv * (U.T @ r)))

        if np.abs(p).max(initial=0.0) <= 1e-13 * (1.0 + np.abs(x).max(initial=0.0)) and not zero_curv:
            # stationary on the working face: check inequality multipliers
            lam = _multipliers(Aw, g)
            lam_in = lam[Ge.shape[0]:]
            neg = np.flatnonzero(lam_in < -1e-11 * scale)
            if neg.size == 0:
                return _finish(qp, x, Ge, eq_keep, A, work, lam, m_in, lb_idx, tol, it)
            if degenerate_steps > 3 * n:
                drop = neg[0]  # Bland: lowest position
            else:
                drop = neg[np.argmin(lam_in[neg])]
            work.pop(int(drop))
            continue

        # ratio test over constraints outside the working set
        Ap = A @ p
        slack = b - A @ x
        alpha = np.inf if zero_curv else 1.0
        block = -1
        out = np.setdiff1d(np.arange(A.shape[0]), work)
        out = out[Ap[out] > 1e-14 * (1.0 + np.abs(p).max())]
        if out.size:
            steps = np.maximum(slack[out], 0.0) / Ap[out]
            smin = steps.min()
            if smin < alpha:
                alpha = float(smin)
                block = int(out[np.flatnonzero(steps <= smin + 1e-15)[0]])
        if not np.isfinite(alpha):
            return _empty_result(qp, UNBOUNDED, "unbounded zero-curvature direction", it)
        degenerate_steps = degenerate_steps + 1 if alpha == 0.0 else 0
        x = x + alpha * p
        if block >= 0:
            work.append(block)
            x = _project(x, Ge, ee, A, b, work)
    return _empty_result(qp, NUMERICAL_FAILURE, "iteration limit", it)


def _null_space(M: np.ndarray, n: int) -> np.ndarray:
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M)
    tol = max(M.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    rank = int((s > tol).sum())
    return Vt[rank:].T


def _multipliers(Aw: np.ndarray, g: np.ndarray) -> np.ndarray:
    if Aw.shape[0] == 0:
        return np.zeros(0)
    lam, *_ = np.linalg.lstsq(Aw.T, -g, rcond=None)
    return lam


def _project(x, Ge, ee, A, b, work):
    """Minimal correction so the working constraints hold with equality."""
    Aw = np.vstack([Ge, A[work]]) if work else Ge
    if Aw.shape[0] == 0:
        return x
    rhs = np.concatenate([ee, b[work]])
    resid = rhs - Aw @ x
    dx, *_ = np.linalg.lstsq(Aw, resid, rcond=None)
    return x + dx


def _finish(qp, x, Ge, eq_keep, A, work, lam, m_in, lb_idx, tol, it):
    n = qp.n_vars
    nu = np.zeros(qp.eq_matrix.shape[0])
    nu[eq_keep] = lam[:Ge.shape[0]]
    mu_all = np.zeros(A.shape[0])
    mu_all[work] = np.maximum(lam[Ge.shape[0]:], 0.0)
    mu = mu_all[:m_in]
    rho = np.zeros(n)
    rho[lb_idx] = mu_all[m_in:]
    # snap variables sitting on their bound
    on_bound = [lb_idx[i - m_in] for i in work if i >= m_in]
    x = x.copy()
    x[on_bound] = qp.lower[on_bound]
    obj = float(0.5 * x @ qp.hessian @ x + qp.linear @ x)
    res = SolveResult(OPTIMAL, x, mu, nu, rho, obj, iterations=it)
    return _certify(qp, res, tol)


def numeric_rank(matrix, rtol: Optional[float] = None) -> int:
    """Number of singular values above ``rtol * sigma_max``.

    The default ``rtol`` is ``max(rows, cols) * eps``.
    """
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if rtol is None:
        rtol = max(M.shape) * np.finfo(float).eps
    return int((s > rtol * s[0]).sum()) if s[0] > 0 else 0


def problem_to_json(prob: Problem) -> str:
    """Debug dump for failure triage; the layout is not a stable format."""
    kind = "qp" if isinstance(prob, QuadraticProgram) else "lp"
    doc = {
        "kind": kind,
        "linear": prob.linear.tolist(),
        "ineq_matrix": prob.ineq_matrix.tolist(),
        "ineq_rhs": prob.ineq_rhs.tolist(),
        "eq_matrix": prob.eq_matrix.tolist(),
        "eq_rhs": prob.eq_rhs.tolist(),
        "lower": [None if not np.isfinite(v) else float(v) for v in prob.lower],
    }
    if kind == "qp":
        doc["hessian"] = prob.hessian.tolist()
    return json.dumps(doc)


def problem_from_json(text: str) -> Problem:
    doc = json.loads(text)
    n = len(doc["linear"])
    lower = np.array([-np.inf if v is None else v for v in doc["lower"]], dtype=float)
    blocks = dict(
        ineq_matrix=np.array(doc["ineq_matrix"], dtype=float).reshape(-1, n),
        ineq_rhs=doc["ineq_rhs"],
        eq_matrix=np.array(doc["eq_matrix"], dtype=float).reshape(-1, n),
        eq_rhs=doc["eq_rhs"],
        lower=lower,
    )
    if doc["kind"] == "qp":
        return QuadraticProgram(np.array(doc["hessian"], dtype=float), doc["linear"], **blocks)
    return LinearProgram(doc["linear"], **blocks)
