"""Independent reference computations used by the tests.

None of these call into ``l1dpc``; they rely on brute force or on
textbook formulas so that agreement is meaningful.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def lp_vertex_enumeration(c, A, b):
    """min c'x s.t. A x <= b by checking every basic solution (bounded LPs)."""
    m, n = A.shape
    best, arg = np.inf, None
    for rows in itertools.combinations(range(m), n):
        M = A[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, b[list(rows)])
        if np.all(A @ x <= b + 1e-9):
            v = c @ x
            if v < best - 1e-12:
                best, arg = v, x
    return best, arg


def box_qp_fista(H, f, lo, hi, iters=200000, tol=1e-13):
    """Accelerated projected gradient for min 1/2 x'Hx + f'x on a box."""
    L = np.linalg.eigvalsh(H).max()
    x = np.clip(np.zeros(len(f)), lo, hi)
    y, t = x.copy(), 1.0
    for _ in range(iters):
        xn = np.clip(y - (H @ y + f) / L, lo, hi)
        tn = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = xn + (t - 1) / tn * (xn - x)
        if np.abs(xn - x).max() < tol:
            x = xn
            break
        x, t = xn, tn
    return x


def hull_contains(atoms, w):
    """Feasibility of w = atoms @ theta, theta >= 0, sum(theta) = 1."""
    k = atoms.shape[1]
    res = linprog(np.zeros(k), A_eq=np.vstack([atoms, np.ones((1, k))]),
                  b_eq=np.concatenate([w, [1.0]]), bounds=[(0, None)] * k, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10})
    return res.status == 0


def gauge_bisection(atoms, w, hi=1e3, iters=60):
    """Smallest t with w in t * conv(atoms), by bisection on hull membership."""
    if np.abs(w).max() == 0:
        return 0.0
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if hull_contains(atoms, w / mid):
            hi = mid
        else:
            lo = mid
    return hi


def kkt_residuals(H, f, A, b, G, e, lower, x, mu, nu, rho):
    """Residuals of Hx + f + A'mu + G'nu - rho = 0 with the usual sign rules."""
    n = len(x)
    H = np.zeros((n, n)) if H is None else H
    fin = np.isfinite(lower)
    stat = H @ x + f + A.T @ mu + G.T @ nu - rho
    slack = b - A @ x
    prim = max(np.maximum(-slack, 0).max(initial=0), np.abs(G @ x - e).max(initial=0),
               np.maximum(lower[fin] - x[fin], 0).max(initial=0))
    comp = max(np.abs(mu * slack).max(initial=0),
               np.abs(rho[fin] * (x[fin] - lower[fin])).max(initial=0),
               np.abs(rho[~fin]).max(initial=0))
    dual = max(np.maximum(-mu, 0).max(initial=0), np.maximum(-rho, 0).max(initial=0))
    scale = 1.0 + max(np.abs(M).max(initial=0) for M in (H, f, A, b, G, e, np.where(fin, lower, 0)))
    return max(np.abs(stat).max(initial=0), prim, comp, dual) / scale


def result_kkt(problem, result):
    """Independent KKT re-check of a solver result on its problem object."""
    H = getattr(problem, "hessian", None)
    f = problem.linear if hasattr(problem, "linear") else problem.cost
    return kkt_residuals(H, f, problem.ineq_matrix, problem.ineq_rhs, problem.eq_matrix,
                         problem.eq_rhs, problem.lower, result.primal, result.duals_ineq,
                         result.duals_eq, result.duals_lower)


def lti_rollout(A, B, C, D, x, us):
    ys = []
    for u in us:
        ys.append(C @ x + D @ u)
        x = A @ x + B @ u
    return np.array(ys), x
