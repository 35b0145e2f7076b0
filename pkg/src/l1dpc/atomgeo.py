"""Atom-set geometry: mirroring, extreme-point pruning and atomic norms.

Atoms are stored as the columns of an ``(r, k)`` array.  Labels carry the
source column in the data matrix and the sign (+1 for the recorded column,
-1 for its mirror image).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from .numsolve import DEFAULT_TOL, LinearProgram, SolverError, ToleranceConfig, solve_lp
from .trajdata import DataDictionary

ORIGINAL = "original"
MIRRORED = "mirrored"
PRUNED = "pruned"
PRUNED_MIRRORED = "pruned_mirrored"


class SpanError(ValueError):
    """Target trajectory is outside the span of the atoms (full row rank violated)."""


@dataclass(frozen=True)
class AtomSet:
    atoms: np.ndarray
    labels: tuple
    kind: str = ORIGINAL
    notes: tuple = ()

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.atoms, dtype=float))
        if A.shape[1] != len(self.labels):
            raise ValueError("one label per atom required")
        A.setflags(write=False)
        object.__setattr__(self, "atoms", A)

    @classmethod
    def from_matrix(cls, matrix) -> "AtomSet":
        M = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(M, tuple((j, 1) for j in range(M.shape[1])), ORIGINAL)

    @property
    def dim(self) -> int:
        return self.atoms.shape[0]

    def __len__(self) -> int:
        return self.atoms.shape[1]

    def source_indices(self, sign: Optional[int] = None) -> list:
        return [s for s, sg in self.labels if sign is None or sg == sign]


@dataclass
class GaugeResult:
    value: float
    coefficients: np.ndarray
    support: np.ndarray


def _scale(v) -> float:
    return 1.0 + float(np.abs(v).max(initial=0.0))


def mirror(atoms: AtomSet, tol: ToleranceConfig = DEFAULT_TOL) -> AtomSet:
    """Return the centrally symmetric set {+w, -w}.

    Zero atoms, duplicates and antipodal pairs are removed first, keeping
    the lower source index; every removal is listed in ``notes``.
    """
    if atoms.kind != ORIGINAL:
        raise ValueError("mirror expects an original atom set")
    A = atoms.atoms
    keep, notes = [], []
    for j in range(A.shape[1]):
        w = A[:, j]
        src = atoms.labels[j][0]
        thr = tol.dup * _scale(w)
        if np.abs(w).max(initial=0.0) <= thr:
            notes.append(("zero", src))
            continue
        hit = None
        for i in keep:
            if np.abs(A[:, i] - w).max() <= thr:
                hit = ("duplicate", src, atoms.labels[i][0])
                break
            if np.abs(A[:, i] + w).max() <= thr:
                hit = ("antipodal", src, atoms.labels[i][0])
                break
        if hit:
            notes.append(hit)
        else:
            keep.append(j)
    K = A[:, keep]
    labels = tuple((atoms.labels[j][0], 1) for j in keep) + tuple((atoms.labels[j][0], -1) for j in keep)
    return AtomSet(np.hstack([K, -K]), labels, MIRRORED, tuple(notes))


@dataclass
class PruningReport:
    method: str
    retained: list
    discarded: list
    certificates: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    facet_points: int = 0
    asymmetric_ties: int = 0
    seconds: float = 0.0
    provenance: dict = field(default_factory=dict)

    def to_json(self, include_timing: bool = True) -> str:
        doc = {
            "method": self.method,
            "retained": self.retained,
            "discarded": self.discarded,
            "retained_count": len(self.retained),
            "discarded_count": len(self.discarded),
            "facet_points": self.facet_points,
            "asymmetric_ties": self.asymmetric_ties,
            "certificates": {str(k): v for k, v in self.certificates.items()},
            "notes": [list(n) for n in self.notes],
            "provenance": {str(k): list(v) for k, v in self.provenance.items()},
        }
        if include_timing:
            doc["seconds"] = self.seconds
        return json.dumps(doc, indent=2)


def _convex_test(A: np.ndarray, j: int, tol: ToleranceConfig):
    """Least-l1-residual convex combination of the other atoms reproducing atom j."""
    r, k = A.shape
    others = np.delete(np.arange(k), j)
    B = A[:, others]
    nth = others.size
    cost = np.concatenate([np.zeros(nth), np.ones(2 * r)])
    G = np.vstack([np.hstack([B, np.eye(r), -np.eye(r)]),
                   np.concatenate([np.ones(nth), np.zeros(2 * r)])])
    e = np.concatenate([A[:, j], [1.0]])
    res = solve_lp(LinearProgram(cost, eq_matrix=G, eq_rhs=e, lower=np.zeros(nth + 2 * r)), tol)
    if not res.optimal:
        raise SolverError(res.status, f"extreme-point LP for atom {j}: {res.message}")
    theta = np.zeros(k)
    theta[others] = res.primal[:nth]
    return res.objective, theta


def _lp_extreme(A: np.ndarray, tol: ToleranceConfig, n_jobs: int):
    k = A.shape[1]
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            out = list(ex.map(lambda j: _convex_test(A, j, tol), range(k)))
    else:
        out = [_convex_test(A, j, tol) for j in range(k)]
    extreme = np.array([res > tol.feas * _scale(A[:, j]) for j, (res, _) in enumerate(out)])
    return extreme, {j: out[j][1] for j in range(k)}


def _hull_extreme(A: np.ndarray) -> np.ndarray:
    r, k = A.shape
    if r > 3:
        raise ValueError("quickhull_lowdim supports dimension <= 3 only")
    P = A.T
    centered = P - P.mean(axis=0)
    _, s, Vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((s > max(P.shape) * np.finfo(float).eps * (s[0] if s.size else 0)).sum())
    extreme = np.zeros(k, dtype=bool)
    if rank == 0:
        return extreme
    Q = centered @ Vt[:rank].T
    if rank == 1:
        extreme[np.argmin(Q[:, 0])] = True
        extreme[np.argmax(Q[:, 0])] = True
        return extreme
    try:
        hull = ConvexHull(Q)
    except QhullError as exc:  # pragma: no cover - guarded by the rank reduction
        raise SolverError("numerical_failure", str(exc)) from exc
    extreme[hull.vertices] = True
    return extreme


def extreme_points(atoms: AtomSet, method: str = "lp_test",
                   tol: ToleranceConfig = DEFAULT_TOL, n_jobs: int = 1):
    """Keep the atoms that are extreme points of conv(atoms).

    Returns ``(pruned_set, report)``.  ``lp_test`` removes an atom when a
    convex combination of the other atoms reproduces it to within
    ``tol.feas``; atoms on hull facets are therefore removed as well.
    A +/- pair with a split verdict is kept and counted in the report.
    """
    if atoms.kind not in (MIRRORED, PRUNED_MIRRORED):
        raise ValueError("extreme_points expects a mirrored atom set")
    A = atoms.atoms
    k = A.shape[1]
    if k == 0 or np.abs(A).max() == 0.0:
        raise ValueError("degenerate atom set: all atoms identical")
    t0 = time.perf_counter()
    certificates = {}
    if method == "lp_test":
        extreme, thetas = _lp_extreme(A, tol, n_jobs)
    elif method == "quickhull_lowdim":
        extreme, thetas = _hull_extreme(A), {}
    else:
        raise ValueError(f"unknown method {method!r}")

    # central symmetry: atom j and its mirror sit at j and j +/- k/2
    half = k // 2
    ties = 0
    for j in range(half):
        if extreme[j] != extreme[j + half]:
            ties += 1
            extreme[j] = extreme[j + half] = True

    keep = np.flatnonzero(extreme)
    drop = np.flatnonzero(~extreme)
    facet = 0
    if drop.size and keep.size:
        K = A[:, keep]
        for j in drop:
            g = _gauge_lp(K, A[:, j], tol)
            if g.value >= 1.0 - 1e-9:
                facet += 1
            lab = atoms.labels[j]
            if lab[1] == 1:
                certificates[lab[0]] = {
                    "convex_weights": {str(atoms.labels[i][0] * atoms.labels[i][1]): float(t)
                                       for i, t in enumerate(thetas.get(j, [])) if t > 0},
                    "conic_sum_over_retained": g.value,
                }
    labels = tuple(atoms.labels[j] for j in keep)
    pruned = AtomSet(A[:, keep], labels, PRUNED_MIRRORED, atoms.notes)
    report = PruningReport(
        method=method,
        retained=sorted({atoms.labels[j][0] for j in keep}),
        discarded=sorted({atoms.labels[j][0] for j in drop}),
        certificates=certificates,
        notes=list(atoms.notes),
        facet_points=facet,
        asymmetric_ties=ties,
        seconds=time.perf_counter() - t0,
    )
    return pruned, report


def unmirror(pruned: AtomSet, original: AtomSet) -> AtomSet:
    """Original atoms whose + copy survived pruning."""
    if pruned.kind != PRUNED_MIRRORED or original.kind != ORIGINAL:
        raise ValueError("unmirror expects (pruned_mirrored, original) sets")
    index = {lab[0]: j for j, lab in enumerate(original.labels)}
    cols = []
    for j, (src, sign) in enumerate(pruned.labels):
        if src not in index:
            raise ValueError(f"label mismatch: source {src} not in original set")
        w = original.atoms[:, index[src]]
        if np.abs(sign * w - pruned.atoms[:, j]).max() > 1e-12 * _scale(w):
            raise ValueError(f"label mismatch: atom {src} differs between sets")
        if sign == 1:
            cols.append(index[src])
    cols = sorted(cols)
    return AtomSet(original.atoms[:, cols], tuple(original.labels[c] for c in cols), PRUNED,
                   pruned.notes)


def in_span(w, matrix, rtol: float = 1e-8) -> bool:
    w = np.asarray(w, dtype=float).reshape(-1)
    M = np.atleast_2d(np.asarray(matrix, dtype=float))
    if M.shape[1] == 0:
        return bool(np.abs(w).max(initial=0.0) <= rtol)
    c, *_ = np.linalg.lstsq(M, w, rcond=None)
    return bool(np.linalg.norm(M @ c - w) <= rtol * (1.0 + np.linalg.norm(w)))


def _gauge_lp(A: np.ndarray, w: np.ndarray, tol: ToleranceConfig) -> GaugeResult:
    k = A.shape[1]
    res = solve_lp(LinearProgram(np.ones(k), eq_matrix=A, eq_rhs=w, lower=np.zeros(k)), tol)
    if not res.optimal:
        raise SolverError(res.status, f"gauge LP: {res.message}")
    a = np.where(res.primal > 0.0, res.primal, 0.0)
    return GaugeResult(float(res.objective), a, np.flatnonzero(a > tol.feas))


def atomic_norm(w, atoms: AtomSet, tol: ToleranceConfig = DEFAULT_TOL) -> GaugeResult:
    """Gauge of conv(atoms) at ``w``: min sum(a) s.t. w = atoms @ a, a >= 0."""
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != atoms.dim:
        raise ValueError(f"w has length {w.size}, atoms live in R^{atoms.dim}")
    if not in_span(w, atoms.atoms):
        raise SpanError("w lies outside the span of the atoms")
    if np.abs(w).max(initial=0.0) == 0.0:
        return GaugeResult(0.0, np.zeros(len(atoms)), np.zeros(0, dtype=int))
    return _gauge_lp(atoms.atoms, w, tol)


def l1_synthesis_cost(w, matrix, tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """min ||a||_1 s.t. matrix @ a = w, via the split a = a_plus - a_minus."""
    w = np.asarray(w, dtype=float).reshape(-1)
    D = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not in_span(w, D):
        raise SpanError("w lies outside the span of the data matrix")
    ell = D.shape[1]
    res = solve_lp(LinearProgram(np.ones(2 * ell), eq_matrix=np.hstack([D, -D]), eq_rhs=w,
                                 lower=np.zeros(2 * ell)), tol)
    if not res.optimal:
        raise SolverError(res.status, f"1-norm synthesis LP: {res.message}")
    return float(res.objective)


@dataclass
class TrajectoryEffect:
    value: float          # lambda * min ||a||_1 over the full data matrix
    atomic_value: float   # lambda * atomic norm over the pruned mirrored set
    discrepancy: float


def trajectory_specific_effect(w, dd: DataDictionary, lam: float,
                               pruned: Optional[AtomSet] = None,
                               tol: ToleranceConfig = DEFAULT_TOL) -> TrajectoryEffect:
    """Regularization cost of synthesizing ``w``, computed two ways."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if pruned is None:
        pruned, _ = extreme_points(mirror(AtomSet.from_matrix(dd.matrix), tol), tol=tol)
    full = lam * l1_synthesis_cost(w, dd.matrix, tol)
    atomic = lam * atomic_norm(w, pruned, tol).value
    return TrajectoryEffect(full, atomic, abs(full - atomic))


def conic_membership(w, atoms: AtomSet, tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    """True when w = atoms @ a for some a >= 0 (least-l1-residual LP)."""
    w = np.asarray(w, dtype=float).reshape(-1)
    A = atoms.atoms
    r, k = A.shape
    cost = np.concatenate([np.zeros(k), np.ones(2 * r)])
    G = np.hstack([A, np.eye(r), -np.eye(r)])
    res = solve_lp(LinearProgram(cost, eq_matrix=G, eq_rhs=w, lower=np.zeros(k + 2 * r)), tol)
    if not res.optimal:
        raise SolverError(res.status, f"membership LP: {res.message}")
    return bool(res.objective <= tol.feas * _scale(w))


@dataclass
class PrunedData:
    """Everything the pruning pipeline produces for one data matrix."""

    original: AtomSet
    mirrored: AtomSet
    pruned_mirrored: AtomSet
    pruned: AtomSet
    dictionary: DataDictionary
    report: PruningReport


def prune_dictionary(dd: DataDictionary, method: str = "lp_test",
                     tol: ToleranceConfig = DEFAULT_TOL, n_jobs: int = 1) -> PrunedData:
    """Drop the data columns that 1-norm regularized synthesis never uses."""
    original = AtomSet.from_matrix(dd.matrix)
    mirrored = mirror(original, tol)
    pm, report = extreme_points(mirrored, method, tol, n_jobs)
    pruned = unmirror(pm, original)
    cols = pruned.source_indices()
    # dedup removals count as discarded as well
    report.discarded = sorted(set(range(dd.n_cols)) - set(cols))
    if dd.provenance:
        report.provenance = {j: dd.provenance[j] for j in range(dd.n_cols)}
    return PrunedData(original, mirrored, pm, pruned, dd.select(cols), report)


def lemma_predicates(w, data: PrunedData, tol: ToleranceConfig = DEFAULT_TOL) -> tuple:
    """Membership of w in span(D_bar), coni(D_bar_pm), coni(D_pm), span(D)."""
    return (in_span(w, data.pruned.atoms),
            conic_membership(w, data.pruned_mirrored, tol),
            conic_membership(w, data.mirrored, tol),
            in_span(w, data.original.atoms))
