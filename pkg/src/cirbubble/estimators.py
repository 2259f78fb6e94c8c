"""scikit-learn style pricers.

Each pricer takes the seven model parameters plus solver settings as
constructor arguments. ``fit`` validates them and runs the solver;
``predict(X)`` returns prices at the dividend rates in ``X`` and
``transform(X)`` returns the columns ``[intrinsic, price, bubble,
relative]``. ``X`` is a single column (or a flat array) of dividend
rates; ``fit`` ignores its arguments.

>>> pricer = ClosedFormPricer(theta1=0.04).fit()
>>> round(float(pricer.predict([0.26])[0] / pricer.intrinsic([0.26])[0] - 1), 2)
0.18
"""
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import closed_form, hjb
from ._validation import check_count, check_dividends, check_positive
from .exceptions import ConvergenceError, DomainError
from .market_model import bubble_exists, intrinsic_value, normalize_params, thresholds

__all__ = ["ClosedFormPricer", "HJBPricer", "ResalePricer"]

_MODEL_KEYS = ("kappa1", "kappa2", "theta1", "theta2", "sigma1", "sigma2", "lam")


class _PricerMixin(TransformerMixin, BaseEstimator):
    def _fit_params(self):
        self.params_ = normalize_params(**{k: getattr(self, k) for k in _MODEL_KEYS})
        self.thresholds_ = thresholds(self.params_)
        self.bubble_exists_ = bubble_exists(self.params_)

    def intrinsic(self, X):
        check_is_fitted(self, "params_")
        return intrinsic_value(self.params_, check_dividends(X))

    def transform(self, X):
        """Columns ``[intrinsic, price, bubble, relative]`` at each dividend rate."""
        d = check_dividends(X)
        iv = self.intrinsic(d)
        price = self.predict(d)
        return np.column_stack([iv, price, price - iv, price / iv - 1.0])

    def curve(self, X):
        d = check_dividends(X)
        return closed_form.PriceCurve.from_prices(d, self.intrinsic(d), self.predict(d))


class ClosedFormPricer(_PricerMixin):
    """Closed-form minimal equilibrium price (equal volatilities).

    Outside the bubble regime the price is the intrinsic value and the
    volatilities may differ. Fitted attributes: ``params_``,
    ``thresholds_``, ``bubble_exists_`` and ``constants_`` (``None``
    without a bubble).
    """

    def __init__(self, kappa1=0.2, kappa2=0.1, theta1=0.015, theta2=0.02,
                 sigma1=0.02, sigma2=0.02, lam=0.02):
        self.kappa1 = kappa1
        self.kappa2 = kappa2
        self.theta1 = theta1
        self.theta2 = theta2
        self.sigma1 = sigma1
        self.sigma2 = sigma2
        self.lam = lam

    def fit(self, X=None, y=None):
        self._fit_params()
        self.constants_ = (closed_form.compute_paste_constants(self.params_)
                           if self.bubble_exists_ else None)
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        d = check_dividends(X)
        if self.constants_ is None:
            return intrinsic_value(self.params_, d)
        return np.atleast_1d(closed_form.phi(self.params_, self.constants_, d))


class HJBPricer(_PricerMixin):
    """Grid solution of the pricing equation for any volatilities.

    ``predict`` interpolates linearly between grid nodes and rejects
    points beyond ``d_max``. ``report_`` holds the
    :class:`~cirbubble.hjb.SolveReport`.
    """

    def __init__(self, kappa1=0.2, kappa2=0.1, theta1=0.015, theta2=0.02,
                 sigma1=0.02, sigma2=0.02, lam=0.02, d_max=None, grid_n=4001,
                 tol=1e-8, max_iter=200, scheme="hybrid", upper_bc="robin"):
        self.kappa1 = kappa1
        self.kappa2 = kappa2
        self.theta1 = theta1
        self.theta2 = theta2
        self.sigma1 = sigma1
        self.sigma2 = sigma2
        self.lam = lam
        self.d_max = d_max
        self.grid_n = grid_n
        self.tol = tol
        self.max_iter = max_iter
        self.scheme = scheme
        self.upper_bc = upper_bc

    def _grid(self):
        n = check_count("grid_n", self.grid_n, minimum=3)
        d_max = check_positive("d_max", self.d_max, allow_none=True)
        return hjb.Grid.for_params(self.params_, n=n, d_max=d_max)

    def _solve(self, grid):
        return hjb.solve_hjb(self.params_, grid, tol=check_positive("tol", self.tol),
                             max_iter=check_count("max_iter", self.max_iter),
                             scheme=self.scheme, upper_bc=self.upper_bc)

    def fit(self, X=None, y=None):
        self._fit_params()
        self.report_ = self._solve(self._grid())
        if not self.report_.converged:
            raise ConvergenceError(
                f"solver stopped after {self.report_.iterations} iterations "
                f"with residual {self.report_.final_residual:.3g}", self.report_)
        return self

    def predict(self, X):
        check_is_fitted(self, "report_")
        d = check_dividends(X)
        if np.any(d > self.report_.grid.d_max):
            raise DomainError(f"dividend rate beyond the grid end d_max = {self.report_.grid.d_max}")
        return np.interp(d, self.report_.nodes, self.report_.values)


class ResalePricer(HJBPricer):
    """Minimal equilibrium price as the limit of repeated resale.

    ``k_max`` caps the number of resale stages; ``horizon`` (default
    ``12 / lam``) and ``steps`` set the time lattice of each stage.
    """

    def __init__(self, kappa1=0.2, kappa2=0.1, theta1=0.015, theta2=0.02,
                 sigma1=0.02, sigma2=0.02, lam=0.02, d_max=None, grid_n=1001,
                 tol=1e-8, horizon=None, steps=240, k_max=50, scheme="hybrid",
                 upper_bc="robin"):
        self.kappa1 = kappa1
        self.kappa2 = kappa2
        self.theta1 = theta1
        self.theta2 = theta2
        self.sigma1 = sigma1
        self.sigma2 = sigma2
        self.lam = lam
        self.d_max = d_max
        self.grid_n = grid_n
        self.tol = tol
        self.horizon = horizon
        self.steps = steps
        self.k_max = k_max
        self.scheme = scheme
        self.upper_bc = upper_bc

    def _solve(self, grid):
        return hjb.resale_fixed_point(
            self.params_, grid,
            horizon=check_positive("horizon", self.horizon, allow_none=True),
            steps=check_count("steps", self.steps),
            k_max=check_count("k_max", self.k_max, minimum=0),
            tol=check_positive("tol", self.tol), scheme=self.scheme,
            upper_bc=self.upper_bc, keep_iterates=False)
