import doctest

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

import cirbubble.estimators as est_mod
from cirbubble import ClosedFormPricer, HJBPricer, ResalePricer
from cirbubble.exceptions import ConvergenceError, DomainError, RegimeError


def test_docstring_example():
    assert doctest.testmod(est_mod).failed == 0


def test_get_set_params_and_clone():
    p = ClosedFormPricer(theta1=0.04)
    assert p.get_params()["theta1"] == 0.04
    p.set_params(lam=0.03)
    q = clone(p)
    assert q.get_params() == p.get_params() and q is not p


def test_closed_form_pricer_columns():
    p = ClosedFormPricer().fit()
    out = p.transform(np.array([[0.0], [0.01]]))
    assert out.shape == (2, 4)
    np.testing.assert_allclose(out[:, 2], out[:, 1] - out[:, 0])
    assert out[0, 3] == pytest.approx(0.0271, abs=5e-4)
    assert p.thresholds_.d_tilde == pytest.approx(0.01)


def test_closed_form_no_bubble_returns_intrinsic():
    p = ClosedFormPricer(kappa1=0.2, kappa2=0.1, theta1=0.01, theta2=0.03, sigma2=0.05).fit()
    assert p.constants_ is None
    np.testing.assert_array_equal(p.predict([0.1, 0.2]), p.intrinsic([0.1, 0.2]))


def test_closed_form_needs_equal_sigma_in_bubble_regime():
    with pytest.raises(RegimeError):
        ClosedFormPricer(sigma2=0.03).fit()


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ClosedFormPricer().predict([0.1])
    with pytest.raises(NotFittedError):
        HJBPricer().predict([0.1])


def test_input_validation():
    p = ClosedFormPricer().fit()
    with pytest.raises(DomainError):
        p.predict([[0.1, 0.2]])
    with pytest.raises(DomainError):
        p.predict([-0.1])
    with pytest.raises(DomainError):
        p.predict([np.nan])
    with pytest.raises(DomainError):
        ClosedFormPricer(kappa1=-1.0).fit()


def test_hjb_pricer_matches_closed_form():
    cf_p = ClosedFormPricer(theta1=0.04).fit()
    h = HJBPricer(theta1=0.04, grid_n=2001, d_max=1.0).fit()
    d = np.array([0.0, 0.06, 0.26])
    np.testing.assert_allclose(h.predict(d), cf_p.predict(d), atol=1e-4)
    with pytest.raises(DomainError):
        h.predict([5.0])
    assert h.report_.converged


def test_hjb_pricer_bad_settings():
    with pytest.raises(DomainError):
        HJBPricer(grid_n=2).fit()
    with pytest.raises(DomainError):
        HJBPricer(tol=0).fit()
    with pytest.raises(ConvergenceError) as info:
        HJBPricer(max_iter=1, tol=1e-30, grid_n=201).fit()
    assert info.value.report is not None


def test_resale_pricer():
    r = ResalePricer(grid_n=301, d_max=1.0, k_max=100).fit()
    h = HJBPricer(grid_n=301, d_max=1.0).fit()
    np.testing.assert_allclose(r.predict([0.0, 0.01]), h.predict([0.0, 0.01]), atol=5e-4)
    with pytest.raises(ConvergenceError):
        ResalePricer(grid_n=101, d_max=1.0, k_max=1, theta1=0.04, theta2=0.04).fit()


def test_pipeline_compatible():
    pipe = make_pipeline(ClosedFormPricer(theta1=0.04))
    pipe.fit(None)
    assert pipe.transform([[0.26]])[0, 3] == pytest.approx(0.18, abs=0.01)


def test_swapped_params_normalized():
    p = ClosedFormPricer(kappa1=0.1, kappa2=0.2, theta1=0.02, theta2=0.04).fit()
    assert p.params_.swapped and p.params_.kappa1 == 0.2
