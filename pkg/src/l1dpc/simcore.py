"""Plants, data-collection protocols and closed-loop simulation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numsolve import DEFAULT_TOL, SolverError, ToleranceConfig
from .ocp import OcpSpec, solve
from .trajdata import IO, STATE_SPACE, TrajectoryBank

RNG_ALGORITHM = "numpy.random.PCG64"


class Plant:
    n: int
    m: int
    p: int
    setting: str = STATE_SPACE

    def step(self, x, u) -> np.ndarray:
        raise NotImplementedError

    def output(self, x, u) -> np.ndarray:
        return np.asarray(x, dtype=float)


@dataclass
class LTIPlant(Plant):
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: Optional[np.ndarray] = None
    setting: str = IO

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.B = np.atleast_2d(np.asarray(self.B, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.n, self.m = self.B.shape
        self.p = self.C.shape[0]
        self.D = np.zeros((self.p, self.m)) if self.D is None else np.atleast_2d(np.asarray(self.D, float))
        if self.A.shape != (self.n, self.n) or self.C.shape[1] != self.n or self.D.shape != (self.p, self.m):
            raise ValueError("inconsistent state-space matrices")

    def step(self, x, u):
        return self.A @ np.asarray(x, float) + self.B @ np.asarray(u, float)

    def output(self, x, u):
        return self.C @ np.asarray(x, float) + self.D @ np.asarray(u, float)

    def prediction_matrices(self, N: int):
        """y = O x + T u over N steps (u, y time-stacked)."""
        O = np.vstack([self.C @ np.linalg.matrix_power(self.A, i) for i in range(N)])
        T = np.zeros((self.p * N, self.m * N))
        for i in range(N):
            for j in range(i + 1):
                blk = self.D if i == j else self.C @ np.linalg.matrix_power(self.A, i - 1 - j) @ self.B
                T[i * self.p:(i + 1) * self.p, j * self.m:(j + 1) * self.m] = blk
        return O, T


@dataclass
class ScalarQuadraticPlant(Plant):
    """x+ = 2 x^2 + 2 u^2 - 1, output equal to the state."""

    n: int = 1
    m: int = 1
    p: int = 1

    def step(self, x, u):
        x = np.asarray(x, float).reshape(1)
        u = np.asarray(u, float).reshape(1)
        return 2.0 * x ** 2 + 2.0 * u ** 2 - 1.0


@dataclass
class PolynomialPlant(Plant):
    """Scalar x+ = sum c_ij x^i u^j with ``coeffs = {(i, j): c_ij}``."""

    coeffs: dict = field(default_factory=dict)
    n: int = 1
    m: int = 1
    p: int = 1

    def step(self, x, u):
        x = float(np.asarray(x).reshape(-1)[0])
        u = float(np.asarray(u).reshape(-1)[0])
        return np.array([sum(c * x ** i * u ** j for (i, j), c in self.coeffs.items())])


@dataclass
class ExcitationSpec:
    seed: int
    distribution: str = "uniform"
    low: float = -1.0
    high: float = 1.0
    mean: float = 0.0
    std: float = 1.0
    levels: tuple = (-1.0, 1.0)
    horizon: int = 1
    records: int = 1
    noise_std: float = 0.0
    random_initial_state: bool = True

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is mandatory")
        if self.distribution not in ("uniform", "gaussian", "prbs"):
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if self.distribution == "uniform" and not self.low < self.high:
            raise ValueError("uniform excitation needs low < high")
        if self.records < 1 or self.horizon < 1:
            raise ValueError("records and horizon must be >= 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.distribution == "uniform":
            return rng.uniform(self.low, self.high, size)
        if self.distribution == "gaussian":
            return self.mean + self.std * rng.standard_normal(size)
        return rng.choice(np.asarray(self.levels, float), size)


def collect(plant: Plant, excitation: ExcitationSpec) -> TrajectoryBank:
    """Simulate ``records`` independent experiments through the plant.

    Draw order: all initial states (records x n), then all inputs
    (records x m x horizon), then measurement noise.
    """
    rng = excitation.rng()
    R, T = excitation.records, excitation.horizon
    if excitation.random_initial_state:
        X0 = excitation.draw(rng, (R, plant.n))
    else:
        X0 = np.zeros((R, plant.n))
    U = excitation.draw(rng, (R, plant.m, T))
    us, ys, x0s = [], [], []
    for r in range(R):
        x = X0[r]
        seq = []
        for k in range(T):
            u = U[r, :, k]
            if plant.setting == STATE_SPACE:
                x = plant.step(x, u)
                seq.append(x)
            else:
                seq.append(plant.output(x, u))
                x = plant.step(x, u)
        us.append(U[r])
        ys.append(np.column_stack(seq))
        x0s.append(X0[r])
    if excitation.noise_std > 0:
        ys = [y + excitation.noise_std * rng.standard_normal(y.shape) for y in ys]
    return TrajectoryBank.from_arrays(plant.setting, us, ys,
                                      x0s if plant.setting == STATE_SPACE else None)


def draw_atoms(dim: int, count: int, excitation: ExcitationSpec) -> np.ndarray:
    """Raw data columns without any plant, shape (dim, count)."""
    rng = excitation.rng()
    if excitation.distribution == "gaussian" and excitation.mean == 0 and excitation.std == 1:
        return rng.standard_normal((dim, count))
    return excitation.draw(rng, (dim, count))


@dataclass
class LogEntry:
    step: int
    xi: np.ndarray
    u_applied: np.ndarray
    y_measured: np.ndarray
    cost: float
    l1_generator: float
    support: list
    prediction: np.ndarray
    prediction_error: float
    region: Optional[int] = None
    region_support_match: Optional[bool] = None


@dataclass
class ClosedLoopLog:
    entries: list = field(default_factory=list)
    error: Optional[tuple] = None

    def __len__(self) -> int:
        return len(self.entries)

    def states(self) -> np.ndarray:
        return np.array([e.xi for e in self.entries])

    def to_csv(self, path) -> None:
        if not self.entries:
            with open(path, "w", newline="") as fh:
                csv.writer(fh).writerow(["step", "cost", "l1_generator", "support", "prediction_error"])
            return
        e0 = self.entries[0]
        head = (["step"] + [f"xi{i + 1}" for i in range(e0.xi.size)]
                + [f"u_applied{i + 1}" for i in range(e0.u_applied.size)]
                + [f"y_measured{i + 1}" for i in range(e0.y_measured.size)]
                + ["cost", "l1_generator", "support", "prediction_error"])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for e in self.entries:
                w.writerow([e.step] + [repr(float(v)) for v in e.xi]
                           + [repr(float(v)) for v in e.u_applied]
                           + [repr(float(v)) for v in e.y_measured]
                           + [repr(e.cost), repr(e.l1_generator),
                              ";".join(str(s) for s in e.support), repr(e.prediction_error)])


def run_closed_loop(plant: Plant, spec: OcpSpec, x0, steps: int, past_inputs=None,
                    pwa=None, column_ids: Optional[Sequence[int]] = None,
                    tol: ToleranceConfig = DEFAULT_TOL) -> ClosedLoopLog:
    """Receding-horizon loop: solve, apply the first input, advance, shift.

    In the io setting the regressor is initialised by running the plant from
    ``x0`` for ``n_past`` steps with ``past_inputs`` (zeros by default) and
    is updated with applied inputs and measured outputs.  When ``pwa`` is
    given, each step also records which critical region contains
    ``(xi, u*)`` and whether its support equals the OCP support.
    """
    dd = spec.dictionary
    m, p = dd.m, dd.p
    x = np.asarray(x0, dtype=float).reshape(-1)
    log = ClosedLoopLog()
    if dd.setting == IO:
        Np = dd.n_past
        up = np.zeros((m, Np)) if past_inputs is None else np.asarray(past_inputs, float).reshape(m, Np)
        yp = np.zeros((p, Np))
        for k in range(Np):
            yp[:, k] = plant.output(x, up[:, k])
            x = plant.step(x, up[:, k])
    ids = np.arange(dd.n_cols) if column_ids is None else np.asarray(column_ids)
    for k in range(steps):
        xi = x.copy() if dd.setting == STATE_SPACE else np.concatenate([up.T.reshape(-1), yp.T.reshape(-1)])
        try:
            sol = solve(spec, xi, tol)
        except SolverError as exc:
            log.error = (k, str(exc))
            break
        u0 = sol.u[:m]
        if dd.setting == STATE_SPACE:
            x = plant.step(x, u0)
            y_meas = x.copy()
        else:
            y_meas = plant.output(x, u0)
            x = plant.step(x, u0)
            up = np.column_stack([up[:, 1:], u0])
            yp = np.column_stack([yp[:, 1:], y_meas])
        pred = sol.y[:p]
        support = sol.support()
        entry = LogEntry(k, xi, u0, y_meas, sol.cost, sol.l1_generator, support, pred,
                         float(np.abs(pred - y_meas).max()))
        if pwa is not None:
            z = np.concatenate([xi, sol.u])
            try:
                entry.region = pwa.locate(z)
            except LookupError:
                entry.region = None
            if entry.region is not None and pwa.labels:
                labels = {(int(ids[j]), int(np.sign(sol.a[j]))) for j in support}
                near = [{tuple(pwa.labels[i]) for i in r.support}
                        for r in pwa.regions if r.contains(z, 1e-7)]
                # interior points: equal supports; on a shared facet the solve may
                # drop an atom, so a containing region's support must cover it
                if len(near) == 1:
                    entry.region_support_match = labels == near[0]
                else:
                    entry.region_support_match = any(labels <= n for n in near)
        log.entries.append(entry)
    return log


def model_mpc_input(plant: LTIPlant, x, N: int, Q, R) -> np.ndarray:
    """Unconstrained model-based MPC: argmin ||y||_Q^2 + ||u||_R^2 over N steps."""
    O, T = plant.prediction_matrices(N)
    Q = np.asarray(Q, float) * np.eye(plant.p * N) if np.ndim(Q) == 0 else np.asarray(Q, float)
    R = np.asarray(R, float) * np.eye(plant.m * N) if np.ndim(R) == 0 else np.asarray(R, float)
    return np.linalg.solve(T.T @ Q @ T + R, -T.T @ Q @ O @ np.asarray(x, float))


def prediction_error_map(plant: Plant, predictor: Callable, x_grid, u_grid) -> list:
    """Rows ``(x0, u, plant, predictor, abs_error)`` for scalar plants."""
    if plant.n != 1 or plant.m != 1:
        raise ValueError("grid mode needs a scalar state and input")
    rows = []
    for x0 in np.asarray(x_grid, float):
        for u in np.asarray(u_grid, float):
            fv = float(plant.step([x0], [u])[0])
            pv = float(np.asarray(predictor(np.array([x0, u]))).reshape(-1)[0])
            rows.append((float(x0), float(u), fv, pv, abs(fv - pv)))
    return rows


def write_error_map(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x0", "u", "plant", "predictor", "abs_error"])
        for r in rows:
            w.writerow([repr(v) for v in r])
