"""Trajectory data banks and the partitioned data matrix.

Row layout of a dictionary column (one length-L window of one record)::

    io:          (u_p ; y_p | u ; y)     u_p, y_p over N_p steps, u, y over N steps
    state_space: (x_0       | u ; x)     x over the N successor states

The block before ``|`` is the past/initial-condition block ``W``.  ``Z`` is
``W`` stacked over ``U``.  Each time-stacked block lists every channel at
time 0, then every channel at time 1, and so on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .numsolve import numeric_rank

IO = "io"
STATE_SPACE = "state_space"


@dataclass(frozen=True)
class Record:
    """One recorded experiment.

    ``u`` has shape (m, T).  In the io setting ``y`` has shape (p, T); in the
    state-space setting ``y`` holds the successor states x(1..T), shape (n, T),
    and ``x0`` the initial state.
    """

    u: np.ndarray
    y: np.ndarray
    x0: Optional[np.ndarray] = None

    @property
    def length(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True)
class TrajectoryBank:
    setting: str
    records: tuple
    m: int
    p: int  # output dimension; equals n in the state-space setting

    def __post_init__(self):
        if self.setting not in (IO, STATE_SPACE):
            raise ValueError(f"unknown setting {self.setting!r}")
        if not self.records:
            raise ValueError("empty trajectory bank")
        for i, rec in enumerate(self.records):
            if rec.u.shape[0] != self.m or rec.y.shape[0] != self.p:
                raise ValueError(f"record {i}: dimension mismatch")
            if rec.u.shape[1] != rec.y.shape[1] or rec.length < 1:
                raise ValueError(f"record {i}: u and y lengths differ or are empty")
            if self.setting == STATE_SPACE and (rec.x0 is None or rec.x0.size != self.p):
                raise ValueError(f"record {i}: state-space record needs x0 of length {self.p}")

    @classmethod
    def from_arrays(cls, setting: str, us, ys, x0s=None) -> "TrajectoryBank":
        if len(us) == 0:
            raise ValueError("empty trajectory bank")
        recs = []
        for i, (u, y) in enumerate(zip(us, ys)):
            u = np.atleast_2d(np.asarray(u, dtype=float))
            y = np.atleast_2d(np.asarray(y, dtype=float))
            x0 = None if x0s is None else np.asarray(x0s[i], dtype=float).reshape(-1)
            recs.append(Record(u, y, x0))
        return cls(setting, tuple(recs), recs[0].u.shape[0], recs[0].y.shape[0])


@dataclass(frozen=True)
class DataDictionary:
    """Column-stacked trajectory windows with their row partition."""

    matrix: np.ndarray
    n_w: int
    n_u: int
    n_y: int
    setting: str = IO
    m: int = 0
    p: int = 0
    n_past: int = 0
    horizon: int = 0
    provenance: tuple = ()
    n: Optional[int] = None

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)
        if self.n_w + self.n_u + self.n_y != M.shape[0]:
            raise ValueError("row partition does not cover the matrix rows")
        if self.provenance and len(self.provenance) != M.shape[1]:
            raise ValueError("provenance length differs from column count")

    @classmethod
    def from_matrix(cls, matrix, n_w: int, n_u: int, n_y: int, **kw) -> "DataDictionary":
        """Wrap a raw matrix (e.g. abstract atoms) with an explicit row split."""
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        kw.setdefault("provenance", tuple((j, 0) for j in range(matrix.shape[1])))
        return cls(matrix, n_w, n_u, n_y, **kw)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_z(self) -> int:
        return self.n_w + self.n_u

    @property
    def rows_w(self) -> slice:
        return slice(0, self.n_w)

    @property
    def rows_u(self) -> slice:
        return slice(self.n_w, self.n_w + self.n_u)

    @property
    def rows_y(self) -> slice:
        return slice(self.n_w + self.n_u, self.n_rows)

    @property
    def W(self) -> np.ndarray:
        return self.matrix[self.rows_w]

    @property
    def U(self) -> np.ndarray:
        return self.matrix[self.rows_u]

    @property
    def Y(self) -> np.ndarray:
        return self.matrix[self.rows_y]

    @property
    def Z(self) -> np.ndarray:
        return self.matrix[: self.n_z]

    @property
    def window_length(self) -> int:
        return self.n_past + self.horizon

    def select(self, columns: Sequence[int]) -> "DataDictionary":
        cols = np.asarray(columns, dtype=int)
        prov = tuple(self.provenance[j] for j in cols) if self.provenance else ()
        return DataDictionary(self.matrix[:, cols], self.n_w, self.n_u, self.n_y,
                              self.setting, self.m, self.p, self.n_past, self.horizon,
                              prov, self.n)

    def with_matrix(self, matrix) -> "DataDictionary":
        return DataDictionary(matrix, self.n_w, self.n_u, self.n_y, self.setting, self.m,
                              self.p, self.n_past, self.horizon, self.provenance, self.n)

    def to_json(self) -> str:
        doc = {
            "dims": {"setting": self.setting, "m": self.m, "p": self.p, "n": self.n,
                     "n_past": self.n_past, "horizon": self.horizon,
                     "rows": self.n_rows, "cols": self.n_cols},
            "partition": {"W": [0, self.n_w], "U": [self.n_w, self.n_z],
                          "Y": [self.n_z, self.n_rows]},
            # column-major entries
            "entries": self.matrix.T.reshape(-1).tolist(),
            "provenance": [list(p) for p in self.provenance],
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "DataDictionary":
        doc = json.loads(text)
        d, part = doc["dims"], doc["partition"]
        M = np.asarray(doc["entries"], dtype=float).reshape(d["cols"], d["rows"]).T
        return cls(M, part["W"][1] - part["W"][0], part["U"][1] - part["U"][0],
                   part["Y"][1] - part["Y"][0], d["setting"], d["m"], d["p"],
                   d["n_past"], d["horizon"], tuple(tuple(p) for p in doc["provenance"]),
                   d.get("n"))


def _stack(seq: np.ndarray) -> np.ndarray:
    """(channels, T) -> time-major column vector."""
    return seq.T.reshape(-1)


def build_dictionary(bank: TrajectoryBank, n_past: int, horizon: int,
                     windowing: str = "hankel_sliding") -> DataDictionary:
    """Cut every record into length-L windows and stack them as columns.

    In the state-space setting ``n_past`` must be 0 and a window is
    (x(k), u(k..k+N-1), x(k+1..k+N)).
    """
    if windowing not in ("hankel_sliding", "one_column_per_record"):
        raise ValueError(f"unknown windowing {windowing!r}")
    m, p = bank.m, bank.p
    if bank.setting == STATE_SPACE:
        if n_past != 0:
            raise ValueError("state-space dictionaries use n_past = 0")
        L = horizon
    else:
        if n_past < 1:
            raise ValueError("io dictionaries need n_past >= 1")
        L = n_past + horizon
    if horizon < 1:
        raise ValueError("horizon must be >= 1")

    cols, prov = [], []
    for i, rec in enumerate(bank.records):
        T = rec.length
        if windowing == "one_column_per_record" and T != L:
            raise ValueError(f"record {i} has length {T}, expected exactly {L}")
        if T < L:
            raise ValueError(f"record {i} too short: {T} < {L}")
        for k in range(T - L + 1):
            u = rec.u[:, k:k + L]
            if bank.setting == STATE_SPACE:
                xs = np.column_stack([rec.x0, rec.y])
                col = np.concatenate([xs[:, k], _stack(u), _stack(xs[:, k + 1:k + 1 + L])])
            else:
                y = rec.y[:, k:k + L]
                col = np.concatenate([_stack(u[:, :n_past]), _stack(y[:, :n_past]),
                                      _stack(u[:, n_past:]), _stack(y[:, n_past:])])
            cols.append(col)
            prov.append((i, k))
    M = np.column_stack(cols)
    if bank.setting == STATE_SPACE:
        n_w, n_u, n_y = p, m * horizon, p * horizon
    else:
        n_w, n_u, n_y = (m + p) * n_past, m * horizon, p * horizon
    return DataDictionary(M, n_w, n_u, n_y, bank.setting, m, p, n_past, horizon, tuple(prov),
                          p if bank.setting == STATE_SPACE else None)


@dataclass
class GpeResult:
    holds: bool
    rank: int
    required: int


def check_gpe(dd: DataDictionary, n: int, rtol: Optional[float] = None) -> GpeResult:
    """Rank test ``rank(D) == L*m + n`` (io) or ``n + m*N`` (state space)."""
    if dd.setting == STATE_SPACE:
        required = n + dd.m * dd.horizon
    else:
        required = dd.window_length * dd.m + n
    rank = numeric_rank(dd.matrix, rtol)
    return GpeResult(rank == required, rank, required)


def check_full_row_rank(dd: DataDictionary, rtol: Optional[float] = None) -> bool:
    return numeric_rank(dd.matrix, rtol) == dd.n_rows


def extract_regressor(u_recent, y_recent, n_past: int) -> np.ndarray:
    """Stack the last ``n_past`` inputs and outputs in the W row layout.

    ``u_recent`` is (m, n_past) and ``y_recent`` is (p, n_past), oldest first.
    One-dimensional inputs are read as single-channel sequences.
    """
    u = np.asarray(u_recent, dtype=float)
    y = np.asarray(y_recent, dtype=float)
    u = u.reshape(1, -1) if u.ndim < 2 else u
    y = y.reshape(1, -1) if y.ndim < 2 else y
    if u.shape[1] != n_past or y.shape[1] != n_past:
        raise ValueError(f"expected exactly {n_past} steps, got {u.shape[1]} and {y.shape[1]}")
    return np.concatenate([_stack(u), _stack(y)])


def unstack_column(dd: DataDictionary, j: int) -> dict:
    """Split column ``j`` back into per-block (channels, steps) arrays."""
    c = dd.matrix[:, j]
    m, p = dd.m, dd.p
    if dd.setting == STATE_SPACE:
        return {"x0": c[dd.rows_w].copy(),
                "u": c[dd.rows_u].reshape(dd.horizon, m).T,
                "x": c[dd.rows_y].reshape(dd.horizon, p).T}
    Np = dd.n_past
    w = c[dd.rows_w]
    return {"u_p": w[:m * Np].reshape(Np, m).T, "y_p": w[m * Np:].reshape(Np, p).T,
            "u": c[dd.rows_u].reshape(dd.horizon, m).T,
            "y": c[dd.rows_y].reshape(dd.horizon, p).T}


# -- CSV interchange ---------------------------------------------------------

def read_trajectory_csv(path, setting: str) -> TrajectoryBank:
    """Parse ``record,k,u1..um,y1..yp`` (io) or ``record,k,x1..xn,u1..um``.

    State-space files carry T+1 rows per record (k = 0..T) with the input
    cells of the last row left empty.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    if header[:2] != ["record", "k"]:
        raise ValueError("CSV header must start with 'record,k'")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u")]
    other = "x" if setting == STATE_SPACE else "y"
    s_cols = [i for i, h in enumerate(header) if h.startswith(other)]
    if not u_cols or not s_cols:
        raise ValueError(f"CSV needs u* and {other}* columns")

    grouped: dict = {}
    for r in rows:
        rec, k = int(r[0]), int(r[1])
        grouped.setdefault(rec, []).append((k, r))
    us, ys, x0s = [], [], []
    for rec in sorted(grouped):
        items = grouped[rec]
        ks = [k for k, _ in items]
        if ks != list(range(len(ks))):
            raise ValueError(f"record {rec}: time index has gaps or is unsorted")
        sig = np.array([[float(r[i]) for i in s_cols] for _, r in items]).T
        if setting == STATE_SPACE:
            u = np.array([[float(r[i]) for i in u_cols] for _, r in items[:-1]]).T
            x0s.append(sig[:, 0])
            ys.append(sig[:, 1:])
        else:
            u = np.array([[float(r[i]) for i in u_cols] for _, r in items]).T
            ys.append(sig)
        us.append(u)
    return TrajectoryBank.from_arrays(setting, us, ys, x0s if setting == STATE_SPACE else None)


def write_trajectory_csv(bank: TrajectoryBank, path) -> None:
    m, p = bank.m, bank.p
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if bank.setting == STATE_SPACE:
            w.writerow(["record", "k"] + [f"x{i + 1}" for i in range(p)] + [f"u{i + 1}" for i in range(m)])
            for r, rec in enumerate(bank.records):
                xs = np.column_stack([rec.x0, rec.y])
                for k in range(rec.length + 1):
                    u = [repr(float(v)) for v in rec.u[:, k]] if k < rec.length else [""] * m
                    w.writerow([r, k] + [repr(float(v)) for v in xs[:, k]] + u)
        else:
            w.writerow(["record", "k"] + [f"u{i + 1}" for i in range(m)] + [f"y{i + 1}" for i in range(p)])
            for r, rec in enumerate(bank.records):
                for k in range(rec.length):
                    w.writerow([r, k] + [repr(float(v)) for v in rec.u[:, k]]
                               + [repr(float(v)) for v in rec.y[:, k]])
