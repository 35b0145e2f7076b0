"""Regularized DPC optimal control problem in its mirrored conic form.

Decision vector ``x = (u, y, a_pm)`` with ``a_pm = (a_plus, a_minus) >= 0``
and data matrix ``[D, -D]``.  The cost is::

    ||y - y_ref||_Q^2 + ||u - u_ref||_R^2 + lam * 1^T a_pm

A nonzero ``y_ref`` is handled by shifting the output rows of the data (and
the output bounds) so the regularized problem is posed around the reference.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numsolve import (DEFAULT_TOL, OPTIMAL, QuadraticProgram, SolveResult, SolverError,
                       ToleranceConfig, solve_qp)
from .trajdata import DataDictionary


def _weight(w, size: int) -> np.ndarray:
    W = np.asarray(w, dtype=float)
    if W.ndim == 0:
        if W < 0:
            raise ValueError("weight must be positive semidefinite")
        return float(W) * np.eye(size)
    W = W.reshape(size, size)
    if np.abs(W - W.T).max(initial=0.0) > 1e-10 * (1 + np.abs(W).max(initial=0.0)):
        raise ValueError("weight matrix must be symmetric")
    if size and np.linalg.eigvalsh(W).min() < -1e-10:
        raise ValueError("weight matrix must be positive semidefinite")
    return W


def _bounds(b, size: int):
    if b is None:
        return np.full(size, -np.inf), np.full(size, np.inf)
    lo, hi = b
    lo = np.broadcast_to(np.asarray(-np.inf if lo is None else lo, dtype=float), (size,)).copy()
    hi = np.broadcast_to(np.asarray(np.inf if hi is None else hi, dtype=float), (size,)).copy()
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return lo, hi


@dataclass
class OcpSpec:
    """Problem data.  ``Q`` and ``R`` accept a scalar as shorthand for ``c*I``."""

    dictionary: DataDictionary
    Q: object = 1.0
    R: object = 1.0
    lam: float = 1.0
    y_ref: Optional[np.ndarray] = None
    u_ref: Optional[np.ndarray] = None
    u_bounds: Optional[tuple] = None
    y_bounds: Optional[tuple] = None
    allow_unregularized: bool = False

    def __post_init__(self):
        dd = self.dictionary
        self.Q = _weight(self.Q, dd.n_y)
        self.R = _weight(self.R, dd.n_u)
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.lam == 0 and not self.allow_unregularized:
            raise ValueError("lam = 0 leaves the equality constraints meaningless under full "
                             "row rank data; pass allow_unregularized=True to proceed")
        self.y_ref = np.zeros(dd.n_y) if self.y_ref is None else np.asarray(self.y_ref, float).reshape(dd.n_y)
        self.u_ref = np.zeros(dd.n_u) if self.u_ref is None else np.asarray(self.u_ref, float).reshape(dd.n_u)
        self.u_lo, self.u_hi = _bounds(self.u_bounds, dd.n_u)
        self.y_lo, self.y_hi = _bounds(self.y_bounds, dd.n_y)

    @property
    def regularized(self) -> bool:
        return self.lam > 0

    def with_dictionary(self, dd: DataDictionary) -> "OcpSpec":
        return OcpSpec(dd, self.Q, self.R, self.lam, self.y_ref, self.u_ref,
                       (self.u_lo, self.u_hi), (self.y_lo, self.y_hi), self.allow_unregularized)

    def with_lambda(self, lam: float) -> "OcpSpec":
        return OcpSpec(self.dictionary, self.Q, self.R, lam, self.y_ref, self.u_ref,
                       (self.u_lo, self.u_hi), (self.y_lo, self.y_hi), self.allow_unregularized)


@dataclass
class OcpLayout:
    n_u: int
    n_y: int
    n_a: int
    split: bool

    @property
    def u(self) -> slice:
        return slice(0, self.n_u)

    @property
    def y(self) -> slice:
        return slice(self.n_u, self.n_u + self.n_y)

    @property
    def a(self) -> slice:
        return slice(self.n_u + self.n_y, self.n_u + self.n_y + self.n_a)


def assemble(spec: OcpSpec, xi) -> tuple[QuadraticProgram, OcpLayout]:
    dd = spec.dictionary
    xi = np.asarray(xi, dtype=float).reshape(-1)
    if xi.size != dd.n_w:
        raise ValueError(f"regressor has length {xi.size}, expected {dd.n_w}")
    D = np.array(dd.matrix)
    D[dd.rows_y] -= spec.y_ref[:, None]
    if spec.regularized:
        Dm = np.hstack([D, -D])
    else:
        Dm = D
    nu, ny, na = dd.n_u, dd.n_y, Dm.shape[1]
    n = nu + ny + na
    lay = OcpLayout(nu, ny, na, spec.regularized)

    H = np.zeros((n, n))
    H[lay.u, lay.u] = 2.0 * spec.R
    H[lay.y, lay.y] = 2.0 * spec.Q
    f = np.zeros(n)
    f[lay.u] = -2.0 * spec.R @ spec.u_ref
    if spec.regularized:
        f[lay.a] = spec.lam

    G = np.zeros((dd.n_rows, n))
    G[dd.rows_w, lay.a] = Dm[dd.rows_w]
    G[dd.rows_u, lay.u] = np.eye(nu)
    G[dd.rows_u, lay.a] = -Dm[dd.rows_u]
    G[dd.rows_y, lay.y] = np.eye(ny)
    G[dd.rows_y, lay.a] = -Dm[dd.rows_y]
    e = np.concatenate([xi, np.zeros(nu + ny)])

    rows, rhs = [], []
    for sl, lo, hi in ((lay.u, spec.u_lo, spec.u_hi),
                       (lay.y, spec.y_lo - spec.y_ref, spec.y_hi - spec.y_ref)):
        idx = np.arange(n)[sl]
        for i, l, h in zip(idx, lo, hi):
            if np.isfinite(h):
                r = np.zeros(n); r[i] = 1.0
                rows.append(r); rhs.append(h)
            if np.isfinite(l):
                r = np.zeros(n); r[i] = -1.0
                rows.append(r); rhs.append(-l)
    A = np.array(rows).reshape(-1, n)
    lower = np.full(n, -np.inf)
    if spec.regularized:
        lower[lay.a] = 0.0
    return QuadraticProgram(H, f, A, np.array(rhs), G, e, lower), lay


@dataclass
class OcpSolution:
    u: np.ndarray
    y: np.ndarray
    a_pm: Optional[np.ndarray]
    a: np.ndarray
    cost: float
    tracking: float
    input: float
    regularization: float
    result: SolveResult = field(repr=False)

    @property
    def l1_generator(self) -> float:
        return float(np.abs(self.a).sum())

    def support(self, thr: float = 1e-8) -> list:
        return [int(i) for i in np.flatnonzero(np.abs(self.a) > thr)]

    def to_json(self) -> str:
        r = self.result
        return json.dumps({
            "u": self.u.tolist(), "y": self.y.tolist(),
            "a_pm": None if self.a_pm is None else self.a_pm.tolist(),
            "a": self.a.tolist(),
            "cost": self.cost,
            "cost_split": {"tracking": self.tracking, "input": self.input,
                           "regularization": self.regularization},
            "certificate": {"status": r.status, "iterations": r.iterations,
                            "kkt": None if r.kkt is None else vars(r.kkt)},
        }, indent=2, default=float)


def recover_signed(a_pm, tol: float = 1e-10) -> np.ndarray:
    """``a = a_plus - a_minus``; requires a_plus[i] * a_minus[i] <= tol."""
    a_pm = np.asarray(a_pm, dtype=float).reshape(-1)
    if a_pm.size % 2:
        raise ValueError("a_pm must have even length")
    ell = a_pm.size // 2
    ap, am = a_pm[:ell], a_pm[ell:]
    bad = np.flatnonzero(ap * am > tol)
    if bad.size:
        i = int(bad[0])
        raise ValueError(f"complementarity violated at index {i}: "
                         f"a_plus={ap[i]:.3e}, a_minus={am[i]:.3e}")
    return ap - am


def solve(spec: OcpSpec, xi, tol: ToleranceConfig = DEFAULT_TOL) -> OcpSolution:
    qp, lay = assemble(spec, xi)
    res = solve_qp(qp, tol)
    if res.status != OPTIMAL:
        raise SolverError(res.status, f"OCP {res.status}: {res.message}")
    x = res.primal
    u = x[lay.u].copy()
    y_shift = x[lay.y].copy()
    if lay.split:
        a_pm = x[lay.a].copy()
        a = recover_signed(a_pm)
        reg = spec.lam * float(a_pm.sum())
    else:
        a_pm, a, reg = None, x[lay.a].copy(), 0.0
    du = u - spec.u_ref
    tracking = float(y_shift @ spec.Q @ y_shift)
    inp = float(du @ spec.R @ du)
    return OcpSolution(u, y_shift + spec.y_ref, a_pm, a, tracking + inp + reg,
                       tracking, inp, reg, res)


def receding_horizon_step(spec: OcpSpec, xi, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    sol = solve(spec, xi, tol)
    return sol.u[: spec.dictionary.m]


@dataclass
class EquivalenceReport:
    n: int
    max_cost_delta: float
    max_uy_delta: float
    max_discarded_weight: float
    kkt_ok: bool
    failures: list

    @property
    def passed(self) -> bool:
        return not self.failures and self.kkt_ok

    def as_dict(self) -> dict:
        return {"n": self.n, "max_cost_delta": self.max_cost_delta,
                "max_uy_delta": self.max_uy_delta,
                "max_discarded_weight": self.max_discarded_weight,
                "kkt_ok": self.kkt_ok, "failures": self.failures, "passed": self.passed}


def pruning_equivalence(spec: OcpSpec, kept_columns, xis, cost_tol: float = 1e-6,
                        weight_tol: float = 1e-8, tol: ToleranceConfig = DEFAULT_TOL) -> EquivalenceReport:
    """Solve with the full and the pruned data at each regressor and compare."""
    kept = np.asarray(kept_columns, dtype=int)
    pruned_spec = spec.with_dictionary(spec.dictionary.select(kept))
    discarded = np.setdiff1d(np.arange(spec.dictionary.n_cols), kept)
    dc = dw = duy = 0.0
    kkt_ok = True
    failures = []
    for k, xi in enumerate(xis):
        full = solve(spec, xi, tol)
        red = solve(pruned_spec, xi, tol)
        kkt_ok &= full.result.kkt.passed(tol.kkt) and red.result.kkt.passed(tol.kkt)
        c = abs(full.cost - red.cost)
        d = max(np.abs(full.u - red.u).max(initial=0.0), np.abs(full.y - red.y).max(initial=0.0))
        w = np.abs(full.a[discarded]).max(initial=0.0)
        dc, duy, dw = max(dc, c), max(duy, d), max(dw, w)
        if c > cost_tol or d > cost_tol or w > weight_tol:
            failures.append({"probe": k, "cost_delta": c, "uy_delta": d, "discarded_weight": w})
    return EquivalenceReport(len(xis), dc, duy, dw, bool(kkt_ok), failures)
