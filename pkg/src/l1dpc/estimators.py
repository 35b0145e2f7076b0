"""scikit-learn style wrappers around the functional core.

Data matrices follow the library convention of one trajectory per column.
Estimator inputs follow the scikit-learn convention of one sample per row,
so ``fit(X)`` takes ``X = D.T``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .atomgeo import atomic_norm, prune_dictionary
from .numsolve import DEFAULT_TOL
from .ocp import OcpSpec, solve
from .predictor import enumerate_pwa, evaluate_pwa, mpqp_form, solve_pointwise
from .trajdata import DataDictionary


def _dictionary(X, n_z=None, n_y=None) -> DataDictionary:
    if isinstance(X, DataDictionary):
        return X
    X = check_array(X, ensure_min_samples=1)
    if n_z is None:
        n_y = 1 if n_y is None else n_y
        n_z = X.shape[1] - n_y
    n_y = X.shape[1] - n_z
    if n_z < 0 or n_y < 1:
        raise ValueError("row split leaves no output rows")
    return DataDictionary.from_matrix(X.T, n_z, 0, n_y)


class ExtremePointPruner(BaseEstimator):
    """Select the data columns that are extreme points of the mirrored hull."""

    def __init__(self, method: str = "lp_test", n_jobs: int = 1):
        self.method = method
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        dd = _dictionary(X, n_z=0) if not isinstance(X, DataDictionary) else X
        self.pruned_ = prune_dictionary(dd, self.method, DEFAULT_TOL, self.n_jobs)
        self.n_features_in_ = dd.n_rows
        self.support_ = np.zeros(dd.n_cols, dtype=bool)
        self.support_[self.pruned_.report.retained] = True
        self.report_ = self.pruned_.report
        return self

    def get_support(self, indices: bool = False):
        check_is_fitted(self, "support_")
        return np.flatnonzero(self.support_) if indices else self.support_.copy()

    def transform(self, X):
        """Keep the retained rows of ``X`` (samples = data columns)."""
        check_is_fitted(self, "support_")
        X = check_array(X)
        return X[self.support_]


class AtomicNorm(TransformerMixin, BaseEstimator):
    """Gauge of the pruned mirrored data hull, one value per row of ``X``."""

    def __init__(self, method: str = "lp_test"):
        self.method = method

    def fit(self, X, y=None):
        dd = _dictionary(X, n_z=0) if not isinstance(X, DataDictionary) else X
        self.pruned_ = prune_dictionary(dd, self.method)
        self.n_features_in_ = dd.n_rows
        return self

    def transform(self, X):
        check_is_fitted(self, "pruned_")
        X = check_array(X)
        atoms = self.pruned_.pruned_mirrored
        return np.array([[atomic_norm(w, atoms).value] for w in X])


class ImplicitPredictor(BaseEstimator):
    """Pointwise evaluation of the regularized predictor ``z -> y``."""

    def __init__(self, n_z: int = 1, Q=1.0, lam: float = 1.0, prune: bool = True):
        self.n_z = n_z
        self.Q = Q
        self.lam = lam
        self.prune = prune

    def _atoms(self, X):
        dd = _dictionary(X, n_z=self.n_z) if not isinstance(X, DataDictionary) else X
        if self.prune:
            p = prune_dictionary(dd)
            return p.pruned_mirrored.atoms, p.pruned_mirrored.labels, dd
        return np.hstack([dd.matrix, -dd.matrix]), None, dd

    def fit(self, X, y=None):
        atoms, self.labels_, dd = self._atoms(X)
        self.n_z_ = dd.n_z
        self.form_ = mpqp_form(atoms, self.n_z_, self.Q, self.lam)
        self.atoms_ = atoms
        self.n_features_in_ = self.n_z_
        return self

    def predict(self, Z):
        check_is_fitted(self, "form_")
        Z = check_array(Z)
        if Z.shape[1] != self.n_z_:
            raise ValueError(f"expected {self.n_z_} parameters, got {Z.shape[1]}")
        return np.array([solve_pointwise(self.form_, z).y for z in Z])


class ExplicitPredictor(ImplicitPredictor):
    """Piecewise affine predictor enumerated over a parameter box."""

    def __init__(self, n_z: int = 1, Q=1.0, lam: float = 1.0, prune: bool = True,
                 param_box=(-1.0, 1.0), n_jobs: int = 1):
        super().__init__(n_z, Q, lam, prune)
        self.param_box = param_box
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        super().fit(X, y)
        self.pwa_ = enumerate_pwa(self.atoms_, self.n_z_, self.Q, self.lam, self.param_box,
                                  labels=self.labels_, n_jobs=self.n_jobs)
        self.regions_ = self.pwa_.regions
        return self

    def predict(self, Z):
        check_is_fitted(self, "pwa_")
        Z = check_array(Z)
        return np.array([evaluate_pwa(self.pwa_, z)[0] for z in Z])

    def region_index(self, Z):
        check_is_fitted(self, "pwa_")
        return np.array([self.pwa_.locate(z) for z in check_array(Z)])


class DPCController(BaseEstimator):
    """Receding-horizon controller: ``predict`` maps regressors to first inputs."""

    def __init__(self, Q=1.0, R=1.0, lam: float = 1.0, u_bounds=None, y_bounds=None,
                 prune: bool = True):
        self.Q = Q
        self.R = R
        self.lam = lam
        self.u_bounds = u_bounds
        self.y_bounds = y_bounds
        self.prune = prune

    def fit(self, X: DataDictionary, y=None):
        if not isinstance(X, DataDictionary):
            raise TypeError("DPCController.fit expects a DataDictionary")
        dd = prune_dictionary(X).dictionary if self.prune and self.lam > 0 else X
        self.spec_ = OcpSpec(dd, self.Q, self.R, self.lam, u_bounds=self.u_bounds,
                             y_bounds=self.y_bounds, allow_unregularized=self.lam == 0)
        self.n_features_in_ = dd.n_w
        return self

    def solve(self, xi):
        check_is_fitted(self, "spec_")
        return solve(self.spec_, xi)

    def predict(self, Xi):
        check_is_fitted(self, "spec_")
        m = self.spec_.dictionary.m or self.spec_.dictionary.n_u
        return np.array([solve(self.spec_, xi).u[:m] for xi in check_array(Xi)])
