import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from l1dpc.atomgeo import prune_dictionary
from l1dpc.estimators import (AtomicNorm, DPCController, ExplicitPredictor, ExtremePointPruner,
                              ImplicitPredictor)
from l1dpc.experiments import fig1_dictionary, fig3_dictionary, lti_dictionary
from l1dpc.ocp import OcpSpec, solve


def test_pruner_support_and_params():
    X = fig3_dictionary().matrix.T
    est = ExtremePointPruner().fit(X)
    assert est.get_support().sum() == 8
    np.testing.assert_array_equal(est.get_support(indices=True), [1, 4, 6, 11, 12, 13, 16, 18])
    assert est.transform(X).shape == (8, 3)
    assert clone(est).get_params() == {"method": "lp_test", "n_jobs": 1}
    with pytest.raises(NotFittedError):
        ExtremePointPruner().get_support()


def test_atomic_norm_transformer():
    dd = fig1_dictionary()
    est = AtomicNorm().fit(dd)
    kept = dd.matrix[:, prune_dictionary(dd).report.retained].T
    np.testing.assert_allclose(est.transform(kept).ravel(), 1.0, atol=1e-8)
    assert est.fit_transform(dd.matrix.T).shape == (8, 1)


def test_implicit_and_explicit_predictors_agree():
    X = fig3_dictionary().matrix.T
    imp = ImplicitPredictor(n_z=2, Q=1.0, lam=100.0).fit(X)
    exp = ExplicitPredictor(n_z=2, Q=1.0, lam=100.0, param_box=(-1, 1)).fit(X)
    Z = np.random.default_rng(0).uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(imp.predict(Z), exp.predict(Z), atol=1e-8)
    assert len(exp.regions_) == len(exp.pwa_.regions)
    assert exp.region_index(Z[:3]).shape == (3,)
    with pytest.raises(ValueError):
        imp.predict(np.zeros((2, 3)))


def test_unpruned_predictor_matches_pruned():
    X = fig3_dictionary().matrix.T
    Z = np.random.default_rng(1).uniform(-1, 1, (20, 2))
    a = ImplicitPredictor(n_z=2, lam=10.0, prune=True).fit(X).predict(Z)
    b = ImplicitPredictor(n_z=2, lam=10.0, prune=False).fit(X).predict(Z)
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_controller():
    dd = lti_dictionary(noise_std=0.01)
    ctl = DPCController(Q=1.0, R=0.5, lam=1.0).fit(dd)
    Xi = np.random.default_rng(2).uniform(-1, 1, (4, 4))
    u = ctl.predict(Xi)
    ref = [solve(OcpSpec(dd, Q=1.0, R=0.5, lam=1.0), xi).u[:1] for xi in Xi]
    np.testing.assert_allclose(u, ref, atol=1e-6)
    with pytest.raises(TypeError):
        DPCController().fit(dd.matrix.T)
