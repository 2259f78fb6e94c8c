"""Closed-form minimal equilibrium price when both groups share one volatility.

With ``sigma1 == sigma2 == sigma`` the price solves a second-order ODE
whose drift switches at the trading boundary ``d_tilde``. Below it the
price is group 1's buy-and-hold line plus ``E * M(a1, b1, x1(d))``,
above it group 2's line plus ``F * U(a2, b2, x2(d))``, where

    a_i = lam / kappa_i,  b_i = 2 kappa_i theta_i / sigma**2,
    x_i(d) = 2 kappa_i d / sigma**2.

``E`` and ``F`` are fixed by value and slope matching at ``d_tilde``.
"""
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import specfun
from .exceptions import ConsistencyError, DomainError, RegimeError
from .market_model import (
    _require_normalized,
    bubble_exists,
    group_value,
    intrinsic_value,
    thresholds,
)

__all__ = [
    "PasteConstants",
    "PriceCurve",
    "ENonnegCheck",
    "IntrinsicValue",
    "compute_paste_constants",
    "phi",
    "phi_derivatives",
    "pasting_gaps",
    "bubble_size",
    "relative_bubble",
    "owner",
    "check_e_nonneg",
    "uratio_check",
    "ode_residual",
    "verify_ode_residual",
    "lower_bound",
    "price_curve",
]

PASTE_RTOL = 1e-10


@dataclass(frozen=True)
class PasteConstants:
    """Smooth-pasting constants and the hypergeometric values behind them.

    ``m1, M1`` are ``M(a1, b1, x1)`` and ``M(a1+1, b1+1, x1)``; ``u2, U2``
    are ``U(a2, b2, x2)`` and ``U(a2+1, b2+1, x2)``, all at ``d_tilde``.
    ``A`` is the (positive) determinant of the matching system up to the
    factor ``lam``, and ``scale = 1 / (lam (lam+kappa1) (lam+kappa2))``
    is the common factor multiplying both bracketed expressions.
    """

    E: float
    F: float
    A: float
    scale: float
    m1: float
    u2: float
    M1: float
    U2: float
    a1: float
    b1: float
    x1: float
    a2: float
    b2: float
    x2: float
    d_tilde: float
    sigma: float


class ENonnegCheck(NamedTuple):
    holds: bool
    ratio: float
    bound: float
    lhs: float
    rhs: float


def _require_closed_form_regime(params):
    _require_normalized(params)
    if params.kappa1 == params.kappa2:
        raise RegimeError("closed form needs kappa1 > kappa2 (no trading boundary otherwise)")
    if not bubble_exists(params):
        raise RegimeError("closed form needs kappa1*theta1 > kappa2*theta2 (bubble regime)")
    if not params.equal_volatility:
        raise RegimeError("closed form needs sigma1 == sigma2; use the hjb solver instead")


def compute_paste_constants(params):
    """Solve the value/slope matching conditions at the trading boundary.

    Returns
    -------
    PasteConstants

    Raises
    ------
    RegimeError
        Outside the bubble regime or when the volatilities differ.
    ConsistencyError
        If back-substitution into the matching equations misses by more
        than ``1e-10`` relative.
    """
    _require_closed_form_regime(params)
    k1, k2, t1, t2, lam = params.kappa1, params.kappa2, params.theta1, params.theta2, params.lam
    s2 = params.sigma1 ** 2
    d_tilde = thresholds(params).d_tilde
    a1, b1, x1 = lam / k1, 2 * k1 * t1 / s2, 2 * k1 * d_tilde / s2
    a2, b2, x2 = lam / k2, 2 * k2 * t2 / s2, 2 * k2 * d_tilde / s2
    m1 = specfun.kummer_m(a1, b1, x1)
    M1 = specfun.kummer_m(a1 + 1, b1 + 1, x1)
    u2 = specfun.tricomi_u(a2, b2, x2)
    U2 = specfun.tricomi_u(a2 + 1, b2 + 1, x2)
    A = 2 * m1 * U2 / s2 + M1 * u2 / (k1 * t1)
    scale = 1.0 / (lam * (lam + k1) * (lam + k2))
    E = scale / A * (u2 * (k1 - k2) - 2 * U2 * k1 * k2 * (t1 - t2) / s2)
    F = scale / A * (M1 * k2 * (t1 - t2) / t1 + m1 * (k1 - k2))
    consts = PasteConstants(E=E, F=F, A=A, scale=scale, m1=m1, u2=u2, M1=M1, U2=U2,
                            a1=a1, b1=b1, x1=x1, a2=a2, b2=b2, x2=x2,
                            d_tilde=d_tilde, sigma=params.sigma1)
    value_gap, slope_gap = matching_gaps(params, consts)
    if value_gap > PASTE_RTOL or slope_gap > PASTE_RTOL:
        raise ConsistencyError(
            f"paste constants fail back-substitution (value {value_gap:.3g}, slope {slope_gap:.3g})"
        )
    return consts


def matching_gaps(params, consts):
    """Relative value and slope mismatch of the two branches at ``d_tilde``."""
    d = consts.d_tilde
    v1, s1, _ = _branch(params, consts, 1, d)
    v2, s2, _ = _branch(params, consts, 2, d)
    return abs(v1 - v2) / abs(v1), abs(s1 - s2) / abs(s1)


def pasting_gaps(params, consts):
    """Relative value, slope and curvature mismatch of the branches at ``d_tilde``.

    Only value and slope are imposed; the curvature gap closes because
    both drifts agree at the boundary.
    """
    d = consts.d_tilde
    lo = _branch(params, consts, 1, d)
    hi = _branch(params, consts, 2, d)
    return tuple(abs(x - y) / abs(x) for x, y in zip(lo, hi))


def _branch(params, consts, branch, d):
    """Value, slope and curvature of one closed-form branch at ``d``."""
    s2 = consts.sigma ** 2
    if branch == 1:
        k, c = params.kappa1, consts.E
        a, b = consts.a1, consts.b1
        x = 2 * k * d / s2
        dx = 2 * k / s2
        f = specfun.kummer_m(a, b, x)
        f1 = specfun.kummer_m_prime(a, b, x)
        f2 = specfun.kummer_m_second(a, b, x)
        lin = float(group_value(params, 1, d))
        slope = 1.0 / (params.lam + k)
    else:
        k, c = params.kappa2, consts.F
        a, b = consts.a2, consts.b2
        x = 2 * k * d / s2
        dx = 2 * k / s2
        f = specfun.tricomi_u(a, b, x)
        f1 = specfun.tricomi_u_prime(a, b, x)
        f2 = specfun.tricomi_u_second(a, b, x)
        lin = float(group_value(params, 2, d))
        slope = 1.0 / (params.lam + k)
    return lin + c * f, slope + c * dx * f1, c * dx * dx * f2


def _check_d(d):
    d = np.asarray(d, dtype=float)
    if np.any(~np.isfinite(d)) or np.any(d < 0):
        raise DomainError("dividend rates must be finite and nonnegative")
    return d


def _require_e_nonneg(consts):
    if consts.E < 0:
        raise RegimeError(
            f"E = {consts.E:.6g} < 0: the closed form is not an equilibrium price here; "
            "use lower_bound() for a certified bound or the hjb solver for the price"
        )


def _elementwise(fn, d):
    d = _check_d(d)
    out = np.array([fn(float(x)) for x in d.ravel()]).reshape(d.shape)
    return float(out) if out.ndim == 0 else out


def phi(params, consts, d):
    """Closed-form minimal equilibrium price at dividend rate(s) ``d``.

    The lower branch is used at ``d == d_tilde``.
    """
    _require_e_nonneg(consts)
    return _elementwise(lambda x: _branch(params, consts, 1 if x <= consts.d_tilde else 2, x)[0], d)


def phi_derivatives(params, consts, d):
    """Return ``(phi, phi', phi'')`` at a scalar ``d`` from the analytic recurrences."""
    _require_e_nonneg(consts)
    d = float(_check_d(d))
    return _branch(params, consts, 1 if d <= consts.d_tilde else 2, d)


def bubble_size(params, consts, d):
    """Bubble ``B(d)`` from the piecewise case formulas.

    The split points are ``d_bar`` and ``d_tilde``; which one comes first
    depends on the sign of ``theta1 - theta2``.
    """
    _require_e_nonneg(consts)
    th = thresholds(params)
    d_bar, d_tilde = th.d_bar, th.d_tilde
    k1, k2, lam = params.kappa1, params.kappa2, params.lam
    gap = (k1 - k2) / ((lam + k1) * (lam + k2))

    def em(x):
        return consts.E * specfun.kummer_m(consts.a1, consts.b1, 2 * k1 * x / consts.sigma ** 2)

    def fu(x):
        return consts.F * specfun.tricomi_u(consts.a2, consts.b2, 2 * k2 * x / consts.sigma ** 2)

    def one(x):
        if params.theta1 <= params.theta2:
            if x <= d_bar:
                return em(x)
            if x <= d_tilde:
                return -gap * (x - d_bar) + em(x)
            return fu(x)
        if x <= d_tilde:
            return em(x)
        if x <= d_bar:
            return gap * (x - d_bar) + fu(x)
        return fu(x)

    return _elementwise(one, d)


def relative_bubble(params, consts, d):
    """``R(d) = P(d) / I(d) - 1``."""
    d = _check_d(d)
    return phi(params, consts, d) / intrinsic_value(params, d) - 1.0


def owner(params, d):
    """Group holding the asset at dividend rate(s) ``d``: 1 below ``d_tilde``, else 2.

    Ties at ``d_tilde`` go to group 1.
    """
    _require_normalized(params)
    d_tilde = thresholds(params).d_tilde
    if d_tilde is None:
        raise RegimeError("ownership switch needs kappa1 > kappa2")
    d = _check_d(d)
    out = np.where(d <= d_tilde, 1, 2)
    return int(out) if out.ndim == 0 else out


def uratio_check(a, b, x):
    """Compare ``U(a+1, b+1, x) / U(a, b, x)`` with ``1 / (x - b)``.

    Returns ``(holds, ratio, bound)`` where ``holds`` is ``ratio <= bound``.
    For ``x <= b`` the bound is ``inf`` and the inequality holds trivially.
    """
    ratio = specfun.tricomi_u(a + 1, b + 1, x) / specfun.tricomi_u(a, b, x)
    bound = 1.0 / (x - b) if x > b else math.inf
    return ratio <= bound, ratio, bound


def check_e_nonneg(params):
    """Test whether the paste constant ``E`` is nonnegative.

    Evaluates ``(kappa1 - kappa2) U(a2, b2, x2) >= 2 kappa1 kappa2
    (theta1 - theta2) / sigma**2 * U(a2+1, b2+1, x2)`` and reports the
    U ratio next to its bound ``1 / (x2 - b2)``.
    """
    _require_closed_form_regime(params)
    k1, k2, t1, t2 = params.kappa1, params.kappa2, params.theta1, params.theta2
    s2 = params.sigma1 ** 2
    d_tilde = thresholds(params).d_tilde
    a2, b2, x2 = params.lam / k2, 2 * k2 * t2 / s2, 2 * k2 * d_tilde / s2
    u = specfun.tricomi_u(a2, b2, x2)
    U = specfun.tricomi_u(a2 + 1, b2 + 1, x2)
    lhs = (k1 - k2) * u
    rhs = 2 * k1 * k2 * (t1 - t2) / s2 * U
    bound = 1.0 / (x2 - b2) if x2 > b2 else math.inf
    return ENonnegCheck(holds=lhs >= rhs, ratio=U / u, bound=bound, lhs=lhs, rhs=rhs)


def lower_bound(params, consts, d):
    """Certified lower bound on the price that also holds when ``E < 0``.

    Above ``d_tilde`` the closed form bounds the price from below; the
    intrinsic value does everywhere.
    """
    d = _check_d(d)

    def one(x):
        base = float(intrinsic_value(params, x))
        if x > consts.d_tilde:
            return max(base, _branch(params, consts, 2, x)[0])
        return base

    return _elementwise(one, d)


class IntrinsicValue:
    """Intrinsic value as a callable with analytic derivatives.

    At the kink ``d_bar`` the one-sided slope of the active branch is
    reported (the larger one).
    """

    def __init__(self, params):
        _require_normalized(params)
        self.params = params

    def __call__(self, d):
        return intrinsic_value(self.params, d)

    def derivatives(self, d):
        p = self.params
        v1 = float(group_value(p, 1, d))
        v2 = float(group_value(p, 2, d))
        if v1 > v2 or (v1 == v2 and p.kappa1 <= p.kappa2):
            return v1, 1.0 / (p.lam + p.kappa1), 0.0
        return v2, 1.0 / (p.lam + p.kappa2), 0.0


def ode_residual(params, d, value, slope, curvature):
    """``max_i {kappa_i (theta_i - d) phi' + sigma_i^2 d phi'' / 2} - lam phi + d``."""
    ops = [
        params.kappa(i) * (params.theta(i) - d) * slope + 0.5 * params.sigma(i) ** 2 * d * curvature
        for i in (1, 2)
    ]
    return max(ops) - params.lam * value + d


def verify_ode_residual(params, price, d, step=None):
    """Residual of the max-type pricing ODE for a candidate price function.

    Parameters
    ----------
    price : callable
        Either exposes ``derivatives(d) -> (value, slope, curvature)``,
        used as is, or is a plain ``d -> value`` callable differentiated
        by central differences with spacing ``step``.
    """
    _require_normalized(params)
    d = float(d)
    if hasattr(price, "derivatives"):
        v, v1, v2 = price.derivatives(d)
    else:
        h = step if step is not None else 1e-4 * max(d, 1e-2)
        if d - h < 0:
            raise DomainError("finite-difference stencil leaves the domain; pass a smaller step")
        lo, mid, hi = float(price(d - h)), float(price(d)), float(price(d + h))
        v, v1, v2 = mid, (hi - lo) / (2 * h), (hi - 2 * mid + lo) / (h * h)
    return ode_residual(params, d, v, v1, v2)


@dataclass(frozen=True)
class PriceCurve:
    """Sampled price, intrinsic value and bubble on a dividend grid."""

    grid: np.ndarray
    intrinsic: np.ndarray
    price: np.ndarray
    bubble: np.ndarray
    relative: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise DomainError("price curve needs a nonempty one-dimensional grid")
        if np.any(g < 0) or np.any(np.diff(g) <= 0):
            raise DomainError("grid must be nonnegative and strictly increasing")
        for name in ("intrinsic", "price", "bubble", "relative"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != g.shape:
                raise DomainError(f"{name} has shape {arr.shape}, expected {g.shape}")
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "grid", g)
        tol = 1e-12 * np.maximum(1.0, np.abs(self.intrinsic))
        if np.any(self.price < self.intrinsic - tol):
            raise ConsistencyError("price falls below the intrinsic value")
        if np.any(np.abs(self.bubble - (self.price - self.intrinsic)) > tol):
            raise ConsistencyError("bubble column differs from price - intrinsic")

    @classmethod
    def from_prices(cls, grid, intrinsic, price):
        grid = np.asarray(grid, dtype=float)
        intrinsic = np.asarray(intrinsic, dtype=float)
        price = np.asarray(price, dtype=float)
        bubble = price - intrinsic
        return cls(grid=grid, intrinsic=intrinsic, price=price, bubble=bubble,
                   relative=price / intrinsic - 1.0)

    def __len__(self):
        return self.grid.size


def price_curve(params, grid):
    """Closed-form :class:`PriceCurve` on ``grid``.

    Outside the bubble regime the intrinsic value is the price, for any
    volatilities. Inside it the equal-volatility closed form is used.
    """
    _require_normalized(params)
    grid = _check_d(grid)
    if grid.ndim != 1 or grid.size == 0:
        raise DomainError("grid must be a nonempty one-dimensional array")
    intrinsic = intrinsic_value(params, grid)
    if not bubble_exists(params):
        return PriceCurve.from_prices(grid, intrinsic, intrinsic)
    consts = compute_paste_constants(params)
    return PriceCurve.from_prices(grid, intrinsic, phi(params, consts, grid))
