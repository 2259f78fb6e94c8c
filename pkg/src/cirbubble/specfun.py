"""Confluent hypergeometric functions of the first and second kind.

Only the real regime needed for CIR pricing is covered: ``a > 0``,
``b >= 1`` and ``x >= 0``. ``M`` is summed from its power series (all
terms are positive there, so there is no cancellation) and ``U`` is
integrated from its Laplace-type integral representation

.. math:: U(a, b, x) = \\frac{x^{-a}}{\\Gamma(a)} \\int_0^\\infty
          e^{-u} u^{a-1} (1 + u/x)^{b-a-1} \\, du,

which stays valid when ``b`` is an integer.
"""
import decimal
import math
import warnings
from dataclasses import dataclass

from scipy import integrate

from .exceptions import DomainError, EvaluationError

__all__ = [
    "HypergeomArgs",
    "kummer_m",
    "kummer_m_prime",
    "kummer_m_second",
    "tricomi_u",
    "tricomi_u_prime",
    "tricomi_u_second",
    "m_ratio_cf",
    "kummer_residual",
]

SERIES_RTOL = 1e-16
SERIES_MAX_TERMS = 10_000
QUAD_RTOL = 1e-13
# accepted quadrature error estimate before the result is rejected
QUAD_ACCEPT = 1e-10
CF_RTOL = 1e-15


@dataclass(frozen=True)
class HypergeomArgs:
    """Validated ``(a, b, x)`` triple."""

    a: float
    b: float
    x: float

    def __post_init__(self):
        _check(self.a, self.b, self.x)


def _check(a, b, x):
    if not all(math.isfinite(v) for v in (a, b, x)):
        raise DomainError(f"non-finite hypergeometric argument (a={a}, b={b}, x={x})")
    if a <= 0:
        raise DomainError(f"require a > 0, got a={a}")
    if b < 1:
        raise DomainError(f"require b >= 1, got b={b}")
    if x < 0:
        raise DomainError(f"require x >= 0, got x={x}")


def kummer_m(a, b, x):
    """Kummer's function ``M(a, b, x)`` by direct series summation.

    Stops once a term drops below ``1e-16`` of the running sum past the
    point where terms start shrinking.
    """
    _check(a, b, x)
    if x == 0.0:
        return 1.0
    term = 1.0
    total = 1.0
    for n in range(SERIES_MAX_TERMS):
        ratio = (a + n) * x / ((b + n) * (n + 1))
        term *= ratio
        total += term
        if not math.isfinite(total):
            raise EvaluationError(f"M({a}, {b}, {x}) overflowed", (a, b, x))
        if ratio < 1.0 and term < SERIES_RTOL * total:
            return total
    raise EvaluationError(
        f"M({a}, {b}, {x}) series did not converge in {SERIES_MAX_TERMS} terms",
        (a, b, x),
    )


def kummer_m_prime(a, b, x):
    """``dM/dx = (a / b) M(a + 1, b + 1, x)``."""
    return a / b * kummer_m(a + 1, b + 1, x)


def kummer_m_second(a, b, x):
    """Second derivative of ``M`` via the derivative recurrence applied twice."""
    return a * (a + 1) / (b * (b + 1)) * kummer_m(a + 2, b + 2, x)


def _peak(a, c, x):
    # maximiser of -u + (a-1) log u + c log(1 + u/x) over u > 0
    B = c + a - 1.0 - x
    disc = B * B + 4.0 * (a - 1.0) * x
    if disc < 0:
        return 0.0
    u = 0.5 * (B + math.sqrt(disc))
    return u if u > 0 else 0.0


def tricomi_u(a, b, x):
    """Tricomi's function ``U(a, b, x)`` for ``x > 0``.

    Evaluated by adaptive quadrature of the integral representation,
    with the integrand rescaled by its peak value to stay in floating
    range.

    Raises
    ------
    DomainError
        For ``x == 0``, where ``U`` diverges once ``b >= 1``.
    EvaluationError
        If the quadrature error estimate stays above ``1e-10`` relative
        or the result overflows.
    """
    _check(a, b, x)
    if x == 0.0:
        raise DomainError(f"U({a}, {b}, x) diverges at x = 0 for b >= 1")
    c = b - a - 1.0
    u_star = _peak(a, c, x)
    shift = 0.0
    if u_star > 0.0:
        shift = -u_star + (a - 1.0) * math.log(u_star) + c * math.log1p(u_star / x)
    # on [0, 1] the u^(a-1) factor goes into the algebraic weight
    head = lambda u: math.exp(-u + c * math.log1p(u / x) - shift)
    body = lambda u: math.exp(-u + (a - 1.0) * math.log(u) + c * math.log1p(u / x) - shift)
    split = 2.0 * max(u_star, 1.0) + 10.0
    pieces = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        pieces.append(integrate.quad(head, 0.0, 1.0, weight="alg", wvar=(a - 1.0, 0.0),
                                     epsabs=0.0, epsrel=QUAD_RTOL, limit=200))
        pts = [u_star] if 1.0 < u_star < split else None
        pieces.append(integrate.quad(body, 1.0, split, points=pts,
                                     epsabs=0.0, epsrel=QUAD_RTOL, limit=200))
        pieces.append(integrate.quad(body, split, math.inf,
                                     epsabs=0.0, epsrel=QUAD_RTOL, limit=200))
    value = sum(p[0] for p in pieces)
    err = sum(p[1] for p in pieces)
    if not value > 0 or err > QUAD_ACCEPT * value:
        raise EvaluationError(
            f"U({a}, {b}, {x}) quadrature failed (value={value}, abserr={err})", (a, b, x)
        )
    log_u = shift + math.log(value) - a * math.log(x) - math.lgamma(a)
    if log_u > 709.0:
        raise EvaluationError(f"U({a}, {b}, {x}) overflows", (a, b, x))
    return math.exp(log_u)


def tricomi_u_prime(a, b, x):
    """``dU/dx = -a U(a + 1, b + 1, x)``."""
    return -a * tricomi_u(a + 1, b + 1, x)


def tricomi_u_second(a, b, x):
    return a * (a + 1) * tricomi_u(a + 2, b + 2, x)


def _cf_backward(a, b, x, n, prec):
    with decimal.localcontext() as ctx:
        ctx.prec = prec
        A, B, X = decimal.Decimal(a), decimal.Decimal(b), decimal.Decimal(x)
        tail = decimal.Decimal(0)
        try:
            for m in range(n, 0, -1):
                tail = (A + m) * X / (B + m - X + tail)
        except (decimal.DivisionByZero, decimal.InvalidOperation):
            raise EvaluationError(f"zero denominator in the continued fraction at m={m}",
                                  (a, b, x)) from None
        return float((B - X) / B + tail / B)


def m_ratio_cf(a, b, x, depth=100_000):
    """Ratio ``M(a, b, x) / M(a + 1, b + 1, x)`` as a continued fraction.

    Uses

    .. math:: \\frac{M(a,b,x)}{M(a+1,b+1,x)} = \\frac{b-x}{b}
              + \\frac{1}{b} \\mathop{K}_{m=1}^{\\infty}
              \\frac{(a+m)\\,x}{b+m-x}.

    The fraction is summed backward from a truncation depth ``n`` in
    decimal arithmetic. For ``x > b`` the early partial denominators are
    negative and the approximants only leave a spurious plateau once
    ``n`` exceeds about ``e * x``, while rounding is amplified by roughly
    ``e**x``; so ``n`` starts at ``3x + 32`` with ``30 + x/2`` digits, and
    both grow until two successive approximants agree to ``1e-15``.

    Parameters
    ----------
    a, b, x : float
        Hypergeometric arguments.
    depth : int
        Largest truncation depth tried before giving up.
    """
    _check(a, b, x)
    if depth < 1:
        raise DomainError(f"depth must be >= 1, got {depth}")
    n = min(int(3 * x) + 32, depth)
    prec = 30 + int(0.5 * x)
    prev = _cf_backward(a, b, x, n, prec)
    while n < depth:
        n = min(2 * n, depth)
        prec += 20
        cur = _cf_backward(a, b, x, n, prec)
        if abs(cur - prev) <= CF_RTOL * abs(cur):
            return cur
        prev = cur
    raise EvaluationError(
        f"continued fraction for M ratio did not settle within depth {depth}", (a, b, x)
    )


def kummer_residual(kind, a, b, x):
    """Residual ``x f'' + (b - x) f' - a f`` of Kummer's equation.

    ``kind`` is ``"M"`` or ``"U"``. Derivatives come from the recurrences,
    never from finite differences.
    """
    if kind == "M":
        f, f1, f2 = kummer_m(a, b, x), kummer_m_prime(a, b, x), kummer_m_second(a, b, x)
    elif kind == "U":
        f, f1, f2 = tricomi_u(a, b, x), tricomi_u_prime(a, b, x), tricomi_u_second(a, b, x)
    else:
        raise ValueError(f"kind must be 'M' or 'U', not {kind!r}")
    return x * f2 + (b - x) * f1 - a * f
