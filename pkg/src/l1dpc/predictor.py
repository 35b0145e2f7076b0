"""Implicit predictor of 1-norm regularized DPC, pointwise and explicit.

For parameters ``z = (xi, u)`` the predictor is the output part of::

    min_{y, a}  ||y||_Q^2 + lam * 1^T a
    s.t.        (z, y) = D_pm a,  a >= 0

where ``D_pm`` holds the pruned mirrored atoms.  With ``Q`` positive definite
the optimal ``y`` is unique and piecewise affine in ``z``; the explicit form is
built by enumerating candidate supports of ``a`` and solving the parametric
KKT system of each.
"""

from __future__ import annotations

import itertools
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numsolve import (DEFAULT_TOL, INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram,
                       QuadraticProgram, SolveResult, SolverError, ToleranceConfig,
                       solve_lp, solve_qp)

ACTIVE_THRESHOLD = 1e-9


class UncoveredError(LookupError):
    """No critical region contains the query point."""


def _check_q(Q, n_y: int) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    Q = float(Q) * np.eye(n_y) if Q.ndim == 0 else Q.reshape(n_y, n_y)
    if np.linalg.eigvalsh(0.5 * (Q + Q.T)).min() <= 0:
        raise ValueError("Q must be positive definite: the predictor is only well defined "
                         "when the optimal output is unique")
    return Q


def mirror_index(labels: Optional[Sequence], k: int) -> np.ndarray:
    """Position of the mirror image of every atom."""
    if labels is None:
        half = k // 2
        return np.concatenate([np.arange(half, k), np.arange(half)])
    pos = {tuple(lab): i for i, lab in enumerate(labels)}
    return np.array([pos[(s, -sg)] for s, sg in labels])


@dataclass
class MpqpForm:
    """``min 1/2 s'Hs + f's  s.t.  A s <= 0,  G s = E z`` with ``s = (y, a)``."""

    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    G: np.ndarray
    E: np.ndarray
    n_z: int
    n_y: int
    n_a: int

    def qp(self, z) -> QuadraticProgram:
        z = np.asarray(z, dtype=float).reshape(-1)
        lower = np.concatenate([np.full(self.n_y, -np.inf), np.zeros(self.n_a)])
        return QuadraticProgram(self.H, self.f, eq_matrix=self.G, eq_rhs=self.E @ z, lower=lower)


def mpqp_form(atoms, n_z: int, Q, lam: float) -> MpqpForm:
    D = np.atleast_2d(np.asarray(atoms, dtype=float))
    r, k = D.shape
    n_y = r - n_z
    Q = _check_q(Q, n_y)
    H = np.zeros((n_y + k, n_y + k))
    H[:n_y, :n_y] = 2.0 * Q
    f = np.concatenate([np.zeros(n_y), lam * np.ones(k)])
    A = np.hstack([np.zeros((k, n_y)), -np.eye(k)])
    G = np.block([[np.zeros((n_z, n_y)), D[:n_z]], [-np.eye(n_y), D[n_z:]]])
    E = np.vstack([np.eye(n_z), np.zeros((n_y, n_z))])
    return MpqpForm(H, f, A, G, E, n_z, n_y, k)


@dataclass
class ReducedMpqpForm:
    """Equality-free parametrization ``s = GpE z + V alpha``."""

    V: np.ndarray
    GpE: np.ndarray


def reduce_form(form: MpqpForm) -> ReducedMpqpForm:
    _, s, Vt = np.linalg.svd(form.G)
    rank = int((s > max(form.G.shape) * np.finfo(float).eps * s[0]).sum())
    if rank < form.G.shape[0]:
        raise ValueError("equality block is rank deficient; data matrix lacks full row rank")
    return ReducedMpqpForm(Vt[rank:].T, np.linalg.pinv(form.G) @ form.E)


@dataclass
class PointwiseSolution:
    y: np.ndarray
    a: np.ndarray
    result: SolveResult = field(repr=False)

    @property
    def s(self) -> np.ndarray:
        return np.concatenate([self.y, self.a])

    @property
    def active_set(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self.a <= ACTIVE_THRESHOLD))

    @property
    def support(self) -> frozenset:
        return frozenset(int(i) for i in np.flatnonzero(self.a > ACTIVE_THRESHOLD))


def solve_pointwise(form: MpqpForm, z, tol: ToleranceConfig = DEFAULT_TOL) -> PointwiseSolution:
    res = solve_qp(form.qp(z), tol)
    if res.status != OPTIMAL:
        # the conic hull of the mirrored atoms is the whole space under full row rank
        raise SolverError(res.status, f"pointwise predictor {res.status} at z={z}: "
                                      "data or tolerance problem")
    s = res.primal
    return PointwiseSolution(s[:form.n_y].copy(), s[form.n_y:].copy(), res)


def pointwise(atoms, n_z: int, Q, lam: float, z, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    return solve_pointwise(mpqp_form(atoms, n_z, Q, lam), z, tol).y


# -- explicit solution ---------------------------------------------------------

@dataclass
class CriticalRegion:
    C: np.ndarray
    d: np.ndarray
    F: np.ndarray
    g: np.ndarray
    support: tuple
    active_set: tuple
    center: np.ndarray
    radius: float

    def contains(self, z, tol: float = 1e-9) -> bool:
        z = np.asarray(z, dtype=float)
        return bool(np.all(self.C @ z <= self.d + tol * (1.0 + np.abs(z).max(initial=0.0))))

    def as_dict(self) -> dict:
        return {"C": self.C.tolist(), "d": self.d.tolist(), "F": self.F.tolist(),
                "g": self.g.tolist(), "support": list(self.support),
                "active_set": list(self.active_set), "center": self.center.tolist(),
                "radius": self.radius}


@dataclass
class PwaFunction:
    regions: list
    n_z: int
    n_y: int
    lam: float
    Q: np.ndarray
    param_box: tuple
    labels: Optional[tuple] = None
    complete: bool = True
    candidates: int = 0

    def locate(self, z) -> int:
        for i, reg in enumerate(self.regions):
            if reg.contains(z):
                return i
        raise UncoveredError(f"no critical region contains z={np.asarray(z).tolist()}")

    def to_json(self) -> str:
        lo, hi = self.param_box
        return json.dumps({
            "dims": {"n_z": self.n_z, "n_y": self.n_y, "regions": len(self.regions)},
            "lambda": self.lam, "Q": np.atleast_2d(self.Q).tolist(),
            "param_box": [np.asarray(lo).tolist(), np.asarray(hi).tolist()],
            "labels": None if self.labels is None else [list(l) for l in self.labels],
            "complete": self.complete, "candidates": self.candidates,
            "regions": [r.as_dict() for r in self.regions],
        })

    @classmethod
    def from_json(cls, text: str) -> "PwaFunction":
        doc = json.loads(text)
        regs = [CriticalRegion(np.array(r["C"], float).reshape(-1, doc["dims"]["n_z"]),
                               np.array(r["d"], float),
                               np.array(r["F"], float).reshape(doc["dims"]["n_y"], -1),
                               np.array(r["g"], float), tuple(r["support"]),
                               tuple(r["active_set"]), np.array(r["center"], float),
                               r["radius"]) for r in doc["regions"]]
        labels = None if doc["labels"] is None else tuple(tuple(l) for l in doc["labels"])
        lo, hi = doc["param_box"]
        return cls(regs, doc["dims"]["n_z"], doc["dims"]["n_y"], doc["lambda"],
                   np.array(doc["Q"], float), (np.array(lo), np.array(hi)), labels,
                   doc["complete"], doc["candidates"])


def evaluate_pwa(pwa: PwaFunction, z):
    """``(F_i z + g_i, i)`` for the lowest-index region containing ``z``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    i = pwa.locate(z)
    reg = pwa.regions[i]
    return reg.F @ z + reg.g, i


def _normalize(C: np.ndarray, d: np.ndarray):
    nrm = np.linalg.norm(C, axis=1)
    return C / nrm[:, None], d / nrm


def _chebyshev(C, d, lo, hi):
    """Largest ball inside {C z <= d} intersected with the box; radius capped at 1."""
    nz = C.shape[1]
    Cb = np.vstack([C, np.eye(nz), -np.eye(nz)])
    db = np.concatenate([d, hi, -lo])
    nrm = np.linalg.norm(Cb, axis=1)
    A = np.hstack([Cb, nrm[:, None]])
    cost = np.zeros(nz + 1)
    cost[-1] = -1.0
    A = np.vstack([A, np.eye(nz + 1)[-1]])
    b = np.concatenate([db, [1.0]])
    res = solve_lp(LinearProgram(cost, A, b))
    if res.status == INFEASIBLE:
        return None, -np.inf
    if not res.optimal:
        raise SolverError(res.status, "Chebyshev-ball LP failed")
    return res.primal[:nz], float(res.primal[-1])


def _remove_redundant(C, d):
    keep = list(range(C.shape[0]))
    for i in range(C.shape[0]):
        others = [j for j in keep if j != i]
        if not others:
            continue
        res = solve_lp(LinearProgram(-C[i], C[others], d[others]))
        if res.status == UNBOUNDED:
            continue
        if res.optimal and -res.objective <= d[i] + 1e-9 * (1.0 + abs(d[i])):
            keep.remove(i)
    return C[keep], d[keep]


def _candidate_region(D, n_z, Q, lam, S, lo, hi, interior_tol):
    S = list(S)
    n_y = D.shape[0] - n_z
    DS = D[:, S]
    s = len(S)
    if np.linalg.matrix_rank(DS) < s or np.linalg.matrix_rank(DS[:n_z]) < n_z:
        return None
    ZS, YS = DS[:n_z], DS[n_z:]
    K = np.block([[2.0 * YS.T @ Q @ YS, ZS.T], [ZS, np.zeros((n_z, n_z))]])
    try:
        Kinv = np.linalg.inv(K)
    except np.linalg.LinAlgError:
        return None
    # [a; nu] = Kinv[:, :s] (-lam 1) + Kinv[:, s:] z
    Pa, qa = Kinv[:s, s:], -Kinv[:s, :s].sum(axis=1)
    Pn, qn = Kinv[s:, s:], -Kinv[s:, :s].sum(axis=1)
    rest = [j for j in range(D.shape[1]) if j not in set(S)]
    Zr, Yr = D[:n_z, rest], D[n_z:, rest]
    cross = 2.0 * Yr.T @ Q @ YS
    # multipliers of a_j >= 0 for j outside the support
    Rz = cross @ Pa + Zr.T @ Pn
    Rc = cross @ qa + 1.0 + Zr.T @ qn
    C = np.vstack([-Pa, -Rz])
    d = lam * np.concatenate([qa, Rc])
    nrm = np.linalg.norm(C, axis=1)
    flat = nrm <= 1e-12 * (1.0 + np.abs(C).max(initial=0.0))
    if np.any(d[flat] < -1e-12 * (1.0 + abs(lam))):
        return None
    C, d = _normalize(C[~flat], d[~flat])
    center, radius = _chebyshev(C, d, lo, hi)
    if center is None or radius <= interior_tol:
        return None
    C, d = _remove_redundant(C, d)
    F = YS @ Pa
    g = lam * (YS @ qa)
    return CriticalRegion(C, d, F, g, tuple(S), tuple(j for j in range(D.shape[1]) if j not in set(S)),
                          center, radius)


def _supports(k: int, n_z: int, r: int, mirror: np.ndarray):
    """Supports without a +/- pair, sizes n_z..r, in lexicographic order."""
    for size in range(n_z, r + 1):
        for S in itertools.combinations(range(k), size):
            Sset = set(S)
            if any(mirror[i] in Sset for i in S):
                continue
            yield S


def enumerate_pwa(atoms, n_z: int, Q, lam: float, param_box, labels=None,
                  max_candidates: int = 200_000, n_jobs: int = 1,
                  interior_tol: float = 1e-9) -> PwaFunction:
    """Explicit piecewise affine predictor over ``param_box = (lo, hi)``."""
    D = np.atleast_2d(np.asarray(atoms, dtype=float))
    r, k = D.shape
    n_y = r - n_z
    Q = _check_q(Q, n_y)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    lo = np.broadcast_to(np.asarray(param_box[0], float), (n_z,)).copy()
    hi = np.broadcast_to(np.asarray(param_box[1], float), (n_z,)).copy()
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
        raise ValueError("parameter box must be bounded and nonempty")
    mir = mirror_index(labels, k)
    cands = []
    complete = True
    for S in _supports(k, n_z, r, mir):
        if len(cands) >= max_candidates:
            complete = False
            break
        cands.append(S)

    def work(S):
        return _candidate_region(D, n_z, Q, lam, S, lo, hi, interior_tol)

    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            found = list(ex.map(work, cands))
    else:
        found = [work(S) for S in cands]
    regions = [reg for reg in found if reg is not None]
    return PwaFunction(regions, n_z, n_y, lam, Q, (lo, hi), labels, complete, len(cands))


def coverage(pwa: PwaFunction, probes) -> list:
    """Probes not contained in any region."""
    out = []
    for z in np.atleast_2d(probes):
        try:
            pwa.locate(z)
        except UncoveredError:
            out.append(np.asarray(z).tolist())
    return out


# -- structural checks ----------------------------------------------------------

def _canonical_match(C1, d1, C2, d2, tol: float) -> bool:
    if C1.shape != C2.shape:
        return False
    used = set()
    for c, dv in zip(C1, d1):
        hit = None
        for j, (c2, dv2) in enumerate(zip(C2, d2)):
            if j in used:
                continue
            if np.abs(c - c2).max() <= tol and abs(dv - dv2) <= tol * (1.0 + abs(dv)):
                hit = j
                break
        if hit is None:
            return False
        used.add(hit)
    return True


def region_pairing(pwa: PwaFunction, tol: float = 1e-7) -> dict:
    """Every region must have a partner on -z with the same F and negated g."""
    k = len(pwa.regions[0].support) + len(pwa.regions[0].active_set) if pwa.regions else 0
    mir = mirror_index(pwa.labels, k)
    by_support = {tuple(sorted(r.support)): r for r in pwa.regions}
    missing, mismatched = [], []
    for i, reg in enumerate(pwa.regions):
        partner = by_support.get(tuple(sorted(int(mir[j]) for j in reg.support)))
        if partner is None:
            missing.append(i)
            continue
        ok = (_canonical_match(-reg.C, reg.d, partner.C, partner.d, tol)
              and np.abs(reg.F - partner.F).max(initial=0.0) <= tol
              and np.abs(reg.g + partner.g).max(initial=0.0) <= tol * (1 + np.abs(reg.g).max(initial=0.0)))
        if not ok:
            mismatched.append(i)
    return {"regions": len(pwa.regions), "missing_partner": missing,
            "mismatched": mismatched, "passed": not missing and not mismatched}


def compare_scaled_regions(base: PwaFunction, scaled: PwaFunction, eta: float,
                           tol: float = 1e-7) -> dict:
    """Regions of ``scaled`` (weight eta*lam) must equal eta times those of ``base``."""
    by_support = {tuple(sorted(r.support)): r for r in scaled.regions}
    unmatched = []
    for i, reg in enumerate(base.regions):
        other = by_support.pop(tuple(sorted(reg.support)), None)
        if other is None or not _canonical_match(reg.C, eta * reg.d, other.C, other.d, tol) \
                or np.abs(reg.F - other.F).max(initial=0.0) > tol \
                or np.abs(eta * reg.g - other.g).max(initial=0.0) > tol * (1 + np.abs(other.g).max(initial=0.0)):
            unmatched.append(i)
    return {"base_regions": len(base.regions), "scaled_regions": len(scaled.regions),
            "unmatched_base": unmatched, "extra_scaled": [list(s) for s in by_support],
            "passed": not unmatched and not by_support}


@dataclass
class ScalingReport:
    eta: float
    probes: int
    active_set_violations: list
    max_optimizer_deviation: float
    tol: float

    @property
    def passed(self) -> bool:
        return not self.active_set_violations and self.max_optimizer_deviation <= self.tol

    def as_dict(self) -> dict:
        return {"eta": self.eta, "probes": self.probes,
                "active_set_violations": self.active_set_violations,
                "max_optimizer_deviation": self.max_optimizer_deviation,
                "tol": self.tol, "passed": self.passed}


def verify_scaling(atoms, n_z: int, Q, lam: float, eta: float, probes,
                   tol: float = 1e-6, solver_tol: ToleranceConfig = DEFAULT_TOL) -> ScalingReport:
    """Compare the solution at (z, lam) with the one at (eta z, eta lam)."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    base = mpqp_form(atoms, n_z, Q, lam)
    scaled = mpqp_form(atoms, n_z, Q, eta * lam)
    viol, dev = [], 0.0
    for i, z in enumerate(np.atleast_2d(probes)):
        s1 = solve_pointwise(base, z, solver_tol)
        s2 = solve_pointwise(scaled, eta * np.asarray(z), solver_tol)
        if s1.active_set != s2.active_set:
            viol.append(i)
        dev = max(dev, float(np.abs(s2.s - eta * s1.s).max()))
    return ScalingReport(eta, len(np.atleast_2d(probes)), viol, dev, tol)


@dataclass
class SymmetryReport:
    probes: int
    max_odd_residual: float
    origin_value: float
    tol: float
    plant_mismatch: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_odd_residual <= self.tol and self.origin_value <= self.tol

    def as_dict(self) -> dict:
        return {"probes": self.probes, "max_odd_residual": self.max_odd_residual,
                "origin_value": self.origin_value, "tol": self.tol,
                "plant_mismatch": self.plant_mismatch, "passed": self.passed}


def verify_symmetry(atoms, n_z: int, Q, lam: float, probes, tol: float = 1e-6,
                    plant: Optional[Callable] = None,
                    solver_tol: ToleranceConfig = DEFAULT_TOL) -> SymmetryReport:
    """max ||y(z) + y(-z)|| over probes, plus y(0).

    With ``plant`` (a map z -> true output) the report lists plant and
    predictor values at +z and -z, showing where the data-generating system
    lacks the odd symmetry the predictor always has.
    """
    form = mpqp_form(atoms, n_z, Q, lam)
    worst = 0.0
    mismatch = []
    for z in np.atleast_2d(probes):
        yp = solve_pointwise(form, z, solver_tol).y
        ym = solve_pointwise(form, -np.asarray(z), solver_tol).y
        worst = max(worst, float(np.abs(yp + ym).max()))
        if plant is not None:
            fp = np.atleast_1d(plant(np.asarray(z)))
            fm = np.atleast_1d(plant(-np.asarray(z)))
            mismatch.append({"z": np.asarray(z).tolist(), "plant_plus": fp.tolist(),
                             "plant_minus": fm.tolist(), "predictor_plus": yp.tolist(),
                             "predictor_minus": ym.tolist(),
                             "plant_odd_residual": float(np.abs(fp + fm).max())})
    y0 = solve_pointwise(form, np.zeros(n_z), solver_tol).y
    return SymmetryReport(len(np.atleast_2d(probes)), worst, float(np.abs(y0).max(initial=0.0)),
                          tol, mismatch)
