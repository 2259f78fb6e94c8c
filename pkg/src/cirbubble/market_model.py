"""Belief parameters, buy-and-hold valuation and the bubble predicate.

Each investor group ``i`` believes the dividend rate follows

    dD = kappa_i (theta_i - D) dt + sigma_i sqrt(D) dB

and both groups discount at the common rate ``lam``. Groups are labelled
so that ``kappa1 >= kappa2``; :func:`normalize_params` enforces this.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, RegimeError

__all__ = [
    "ModelParams",
    "Thresholds",
    "normalize_params",
    "intrinsic_value",
    "group_value",
    "thresholds",
    "bubble_exists",
    "conditional_mean",
    "conditional_variance",
    "dstar",
    "drift",
    "dominant_group",
]

_FIELDS = ("kappa1", "kappa2", "theta1", "theta2", "sigma1", "sigma2", "lam")


@dataclass(frozen=True)
class ModelParams:
    """The seven scalars defining both belief systems and discounting.

    Construction checks positivity and the Feller condition
    ``2 kappa_i theta_i / sigma_i**2 >= 1`` for both groups. It does not
    reorder groups; use :func:`normalize_params` for that.

    Attributes
    ----------
    swapped : bool
        True when :func:`normalize_params` exchanged the two groups.
    """

    kappa1: float
    kappa2: float
    theta1: float
    theta2: float
    sigma1: float
    sigma2: float
    lam: float
    swapped: bool = field(default=False, compare=False)

    def __post_init__(self):
        for name in _FIELDS:
            value = getattr(self, name)
            if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value)):
                raise DomainError(f"{name} must be a finite real number, got {value!r}")
            if value <= 0:
                raise DomainError(f"{name} must be strictly positive, got {value}")
            object.__setattr__(self, name, float(value))
        for i in (1, 2):
            ratio = self.feller_ratio(i)
            if ratio < 1.0:
                raise DomainError(
                    f"Feller condition fails for group {i}: "
                    f"2*kappa{i}*theta{i}/sigma{i}**2 = {ratio:.6g} < 1"
                )

    def kappa(self, group):
        return self.kappa1 if group == 1 else self.kappa2

    def theta(self, group):
        return self.theta1 if group == 1 else self.theta2

    def sigma(self, group):
        return self.sigma1 if group == 1 else self.sigma2

    def feller_ratio(self, group):
        return 2.0 * self.kappa(group) * self.theta(group) / self.sigma(group) ** 2

    @property
    def is_normalized(self):
        if self.kappa1 != self.kappa2:
            return self.kappa1 > self.kappa2
        return self.theta1 >= self.theta2

    @property
    def equal_volatility(self):
        return self.sigma1 == self.sigma2

    def as_dict(self):
        return {name: getattr(self, name) for name in _FIELDS}


@dataclass(frozen=True)
class Thresholds:
    """Kink of the intrinsic value and the trading boundary.

    Both are ``None`` when ``kappa1 == kappa2``: the buy-and-hold lines
    are parallel and the drifts never cross, so neither level exists.
    """

    d_bar: float | None
    d_tilde: float | None


def normalize_params(kappa1, kappa2=None, theta1=None, theta2=None, sigma1=None, sigma2=None,
                     lam=None):
    """Validate raw parameters and order the groups so ``kappa1 >= kappa2``.

    Accepts either the seven scalars or an existing :class:`ModelParams`.
    Ties in ``kappa`` are broken by ordering ``theta1 >= theta2``. The
    returned object has ``swapped=True`` when groups were exchanged.
    """
    if isinstance(kappa1, ModelParams):
        p = kappa1
        raw = p.as_dict()
    else:
        raw = dict(kappa1=kappa1, kappa2=kappa2, theta1=theta1, theta2=theta2,
                   sigma1=sigma1, sigma2=sigma2, lam=lam)
        missing = [k for k, v in raw.items() if v is None]
        if missing:
            raise DomainError(f"missing parameters: {', '.join(missing)}")
        p = ModelParams(**raw)
    if p.is_normalized:
        return p
    return ModelParams(
        kappa1=raw["kappa2"], kappa2=raw["kappa1"],
        theta1=raw["theta2"], theta2=raw["theta1"],
        sigma1=raw["sigma2"], sigma2=raw["sigma1"],
        lam=raw["lam"], swapped=not p.swapped,
    )


def _require_normalized(params):
    if not isinstance(params, ModelParams):
        raise DomainError(f"expected ModelParams, got {type(params).__name__}")
    if not params.is_normalized:
        raise DomainError("parameters are not normalized (need kappa1 >= kappa2); "
                          "call normalize_params first")


def group_value(params, group, d):
    """Buy-and-hold value of group ``group``: ``theta/lam + (d - theta)/(lam + kappa)``."""
    k, th, lam = params.kappa(group), params.theta(group), params.lam
    return th / lam + (np.asarray(d, dtype=float) - th) / (lam + k)


def intrinsic_value(params, d):
    """Intrinsic value ``I(d)``: the larger of the two buy-and-hold values.

    Works elementwise on arrays. Both affine branches are evaluated and
    the maximum is taken, so a negative kink location needs no special
    handling.
    """
    _require_normalized(params)
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("dividend rate must be nonnegative")
    out = np.maximum(group_value(params, 1, d), group_value(params, 2, d))
    return float(out) if out.ndim == 0 else out


def thresholds(params):
    _require_normalized(params)
    k1, k2, t1, t2, lam = params.kappa1, params.kappa2, params.theta1, params.theta2, params.lam
    if k1 == k2:
        return Thresholds(d_bar=None, d_tilde=None)
    d_tilde = (k1 * t1 - k2 * t2) / (k1 - k2)
    d_bar = (k1 * k2 * (t1 - t2) + lam * (k1 * t1 - k2 * t2)) / (lam * (k1 - k2))
    return Thresholds(d_bar=d_bar, d_tilde=d_tilde)


def bubble_exists(params):
    """True iff ``kappa1 > kappa2`` and ``kappa1*theta1 > kappa2*theta2``.

    Volatilities play no role.
    """
    _require_normalized(params)
    return params.kappa1 > params.kappa2 and params.kappa1 * params.theta1 > params.kappa2 * params.theta2


def drift(params, group, d):
    return params.kappa(group) * (params.theta(group) - np.asarray(d, dtype=float))


def dominant_group(params):
    """Group whose belief prevails for large dividend rates.

    With ``kappa1 > kappa2`` the slower-reverting group 2 has the larger
    drift once ``d`` exceeds the trading boundary; with equal ``kappa``
    the group with the higher mean level (group 1 after normalization)
    dominates everywhere.
    """
    _require_normalized(params)
    return 2 if params.kappa1 > params.kappa2 else 1


def conditional_mean(params, group, d0, t):
    """``E[D_t | D_0 = d0]`` under group ``group``'s belief."""
    if group not in (1, 2):
        raise DomainError(f"group must be 1 or 2, got {group}")
    d0 = np.asarray(d0, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(d0 < 0) or np.any(t < 0):
        raise DomainError("d0 and t must be nonnegative")
    decay = np.exp(-params.kappa(group) * t)
    out = d0 * decay + params.theta(group) * (1.0 - decay)
    return float(out) if out.ndim == 0 else out


def conditional_variance(params, group, d0, t):
    """``Var[D_t | D_0 = d0]`` for the CIR process of group ``group``."""
    k, th, s = params.kappa(group), params.theta(group), params.sigma(group)
    d0 = np.asarray(d0, dtype=float)
    e = np.exp(-k * np.asarray(t, dtype=float))
    out = d0 * s**2 / k * (e - e**2) + th * s**2 / (2 * k) * (1 - e) ** 2
    return float(out) if out.ndim == 0 else out


def dstar(params, t):
    """Dividend level below which holding to ``t`` beats the intrinsic value.

    Defined for ``kappa1 > kappa2`` and ``t > 0``; tends to the trading
    boundary as ``t -> 0``.
    """
    _require_normalized(params)
    if params.kappa1 == params.kappa2:
        raise RegimeError("dstar requires kappa1 > kappa2")
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("dstar requires t > 0")
    k1, k2, t1, t2, lam = params.kappa1, params.kappa2, params.theta1, params.theta2, params.lam
    coef = k2 * (k1 + lam) * (t2 - t1) / (lam * (k1 - k2))
    ratio = -np.expm1(-lam * t) / -np.expm1(-(lam + k1) * t)
    out = t1 - coef * ratio
    return float(out) if out.ndim == 0 else out
