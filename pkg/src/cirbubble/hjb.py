"""Grid solvers for the minimal equilibrium price with arbitrary volatilities.

Two independent routes are provided:

* :func:`solve_hjb` solves the discretised max-type equation
  ``max_i L_i phi - lam phi + d = 0`` by policy iteration, where
  ``L_i phi = kappa_i (theta_i - d) phi' + sigma_i^2 d phi'' / 2``.
* :func:`resale_fixed_point` builds the price as the limit of repeated
  resale: each stage solves an optimal stopping problem per group with
  the previous stage's price as the resale payoff, starting from the
  intrinsic value.

Both share the same spatial stencil. The drift is differenced centrally
wherever that keeps the scheme monotone and upwinded otherwise, so the
discrete operator is always an M-matrix.
"""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from . import specfun
from .closed_form import PriceCurve
from .exceptions import ConsistencyError, DomainError, SchemeError
from .market_model import _require_normalized, dominant_group, group_value, intrinsic_value, thresholds

__all__ = [
    "Grid",
    "SolveReport",
    "ResaleReport",
    "solve_hjb",
    "resale_fixed_point",
    "supersolution_residual",
    "supersolution_residuals",
    "discrete_operator",
]

SCHEMES = ("hybrid", "upwind")
UPPER_BCS = ("robin", "neumann")
MONOTONE_TOL = 1e-12
INTRINSIC_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform grid ``0 = d_0 < ... < d_{n-1} = d_max``."""

    d_max: float
    n: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and self.n >= 3):
            raise DomainError(f"grid needs at least 3 nodes, got {self.n}")
        if not (math.isfinite(self.d_max) and self.d_max > 0):
            raise DomainError(f"d_max must be positive, got {self.d_max}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "d_max", float(self.d_max))

    @property
    def nodes(self):
        return np.linspace(0.0, self.d_max, self.n)

    @property
    def spacing(self):
        return self.d_max / (self.n - 1)

    @staticmethod
    def default_d_max(params):
        th = thresholds(params)
        pos = lambda v: max(v, 0.0) if v is not None else 0.0
        return max(10 * max(params.theta1, params.theta2), 2 * pos(th.d_bar), 2 * pos(th.d_tilde))

    @classmethod
    def for_params(cls, params, n=4001, d_max=None):
        grid = cls(d_max=cls.default_d_max(params) if d_max is None else d_max, n=n)
        grid.validate_for(params)
        return grid

    def validate_for(self, params):
        th = thresholds(params)
        pos = lambda v: max(v, 0.0) if v is not None else 0.0
        need = max(params.theta1, params.theta2, pos(th.d_bar), pos(th.d_tilde))
        if self.d_max <= need:
            raise DomainError(
                f"d_max = {self.d_max} must exceed max(theta1, theta2, d_bar+, d_tilde+) = {need}"
            )


@dataclass
class SolveReport:
    """Grid solution of the pricing equation plus convergence diagnostics.

    ``policy`` holds the group (1 or 2) whose operator attains the max at
    each node; the last node carries the far-field group.
    """

    grid: Grid
    values: np.ndarray
    policy: np.ndarray
    iterations: int
    final_residual: float
    converged: bool
    intrinsic: np.ndarray = field(repr=False, default=None)

    @property
    def nodes(self):
        return self.grid.nodes

    @property
    def bubble(self):
        return self.values - self.intrinsic

    def curve(self):
        return PriceCurve.from_prices(self.nodes, self.intrinsic, np.maximum(self.values, self.intrinsic))

    def __call__(self, d):
        """Linear interpolation of the grid values."""
        d = np.asarray(d, dtype=float)
        if np.any(d < 0) or np.any(d > self.grid.d_max):
            raise DomainError(f"evaluation point outside [0, {self.grid.d_max}]")
        out = np.interp(d, self.nodes, self.values)
        return float(out) if out.ndim == 0 else out


@dataclass
class ResaleReport(SolveReport):
    """:class:`SolveReport` of the resale iteration with its history.

    ``iterates[k]`` is the price after ``k`` resale stages
    (``iterates[0]`` is the intrinsic value); ``max_decrease`` is the
    largest pointwise drop between consecutive stages.
    """

    iterates: list = field(default_factory=list, repr=False)
    increments: list = field(default_factory=list)
    max_decrease: float = 0.0


def discrete_operator(params, group, grid, scheme="hybrid"):
    """Tridiagonal stencil ``(lower, centre, upper)`` of ``L_group`` on ``grid``.

    Row ``j`` approximates ``(L phi)(d_j) = lower[j] phi[j-1] +
    centre[j] phi[j] + upper[j] phi[j+1]``. At ``d = 0`` the diffusion
    vanishes and the positive drift is differenced forward. The last row
    is left empty; the far-field condition replaces it.
    """
    if scheme not in SCHEMES:
        raise DomainError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    d = grid.nodes
    h = grid.spacing
    b = params.kappa(group) * (params.theta(group) - d)
    a = 0.5 * params.sigma(group) ** 2 * d / h**2
    up_lo = a + np.maximum(-b, 0.0) / h
    up_hi = a + np.maximum(b, 0.0) / h
    if scheme == "hybrid":
        central = a >= np.abs(b) / (2 * h)
        lower = np.where(central, a - b / (2 * h), up_lo)
        upper = np.where(central, a + b / (2 * h), up_hi)
    else:
        lower, upper = up_lo, up_hi
    lower[0] = 0.0
    upper[0] = max(b[0], 0.0) / h
    lower[-1] = upper[-1] = 0.0
    if np.any(lower < -MONOTONE_TOL) or np.any(upper < -MONOTONE_TOL):
        raise SchemeError(f"negative off-diagonal in the {scheme} stencil for group {group}")
    centre = -(lower + upper)
    centre[-1] = 0.0
    return lower, centre, upper


def _far_field_row(params, grid, upper_bc):
    """Coefficients ``(c_prev, c_last, rhs)`` of the condition at ``d_max``.

    ``robin`` matches ``phi - L_dom`` to the decaying Tricomi solution of
    the dominant group's homogeneous equation, so a price of the form
    ``L_dom + C U`` satisfies it exactly; ``neumann`` fixes the slope to
    the dominant buy-and-hold slope.
    """
    if upper_bc not in UPPER_BCS:
        raise DomainError(f"upper_bc must be one of {UPPER_BCS}, got {upper_bc!r}")
    g = dominant_group(params)
    h = grid.spacing
    k, th, s = params.kappa(g), params.theta(g), params.sigma(g)
    slope = 1.0 / (params.lam + k)
    if upper_bc == "neumann":
        rho = 0.0
    else:
        a, b = params.lam / k, 2 * k * th / s**2
        x = 2 * k * grid.d_max / s**2
        dxdd = 2 * k / s**2
        rho = dxdd * specfun.tricomi_u_prime(a, b, x) / specfun.tricomi_u(a, b, x)
    # (phi_N - phi_{N-1})/h - rho*phi_N = slope - rho*L_dom(d_N), negated to
    # share the sign convention of the interior rows
    lin = float(group_value(params, g, grid.d_max))
    return 1.0 / h, -(1.0 / h - rho), -(slope - rho * lin)


def _banded(lower, centre, upper):
    n = centre.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = centre
    ab[2, :-1] = lower[1:]
    return ab


def _apply(lower, centre, upper, v):
    out = centre * v
    out[1:] += lower[1:] * v[:-1]
    out[:-1] += upper[:-1] * v[1:]
    return out


def _initial_policy(params, grid):
    d = grid.nodes
    b1 = params.kappa1 * (params.theta1 - d)
    b2 = params.kappa2 * (params.theta2 - d)
    return np.where(b2 > b1, 2, 1)


def _check_above_intrinsic(values, intrinsic, what):
    gap = np.min(values - intrinsic)
    if gap < -INTRINSIC_TOL * max(1.0, float(np.max(np.abs(intrinsic)))):
        raise ConsistencyError(f"{what} falls below the intrinsic value by {-gap:.3g}")


def solve_hjb(params, grid=None, tol=1e-8, max_iter=200, scheme="hybrid", upper_bc="robin"):
    """Solve the discrete max-type pricing equation by policy iteration.

    Parameters
    ----------
    params : ModelParams
        Normalized parameters; volatilities may differ.
    grid : Grid, optional
        Defaults to :meth:`Grid.for_params` with 4001 nodes.
    tol : float
        Required sup-norm of the discrete residual.
    max_iter : int
        Cap on policy updates.
    scheme : {"hybrid", "upwind"}
        Drift differencing. ``hybrid`` is central where monotone.
    upper_bc : {"robin", "neumann"}
        Far-field condition at ``d_max``.

    Returns
    -------
    SolveReport
        ``converged`` is False when the cap is hit; the report then holds
        the last iterate and its residual.
    """
    _require_normalized(params)
    if tol <= 0:
        raise DomainError("tol must be positive")
    grid = Grid.for_params(params) if grid is None else grid
    grid.validate_for(params)
    d = grid.nodes
    n = grid.n
    lam = params.lam
    stencils = {i: discrete_operator(params, i, grid, scheme) for i in (1, 2)}
    c_prev, c_last, rhs_last = _far_field_row(params, grid, upper_bc)
    rhs = -d.copy()
    rhs[-1] = rhs_last

    policy = _initial_policy(params, grid)
    values = None
    residual = math.inf
    converged = False
    for it in range(1, max_iter + 1):
        lower = np.where(policy == 1, stencils[1][0], stencils[2][0])
        centre = np.where(policy == 1, stencils[1][1], stencils[2][1]) - lam
        upper = np.where(policy == 1, stencils[1][2], stencils[2][2])
        lower[-1], centre[-1], upper[-1] = c_prev, c_last, 0.0
        values = solve_banded((1, 1), _banded(lower, centre, upper), rhs)

        ops = np.vstack([_apply(*stencils[i], values) for i in (1, 2)])
        new_policy = np.where(ops[1] > ops[0], 2, 1)
        new_policy[-1] = dominant_group(params)
        res = np.max(ops, axis=0) - lam * values + d
        res[-1] = c_prev * values[-2] + c_last * values[-1] - rhs_last
        residual = float(np.max(np.abs(res)))
        if np.array_equal(new_policy, policy) and residual < tol:
            converged = True
            break
        policy = new_policy

    intrinsic = intrinsic_value(params, d)
    if converged:
        _check_above_intrinsic(values, intrinsic, "hjb solution")
    return SolveReport(grid=grid, values=values, policy=policy, iterations=it,
                       final_residual=residual, converged=converged, intrinsic=intrinsic)


def _stopping_stage(system, payoff, steps, dt, d, stop):
    """Backward induction of one resale stage for one group.

    Each time step solves the complementarity problem
    ``min(B v - (v_next + dt d), v - payoff) = 0`` by policy iteration
    over stop/continue, warm-started from the previous step's stop set.
    """
    lower, centre, upper, c_prev, c_last, rhs_last = system
    n = d.size
    v = payoff.copy()
    for _ in range(steps):
        cont_rhs = v + dt * d
        cont_rhs[-1] = rhs_last
        for _howard in range(n):
            lo = np.where(stop, 0.0, lower)
            ce = np.where(stop, 1.0, centre)
            up = np.where(stop, 0.0, upper)
            r = np.where(stop, payoff, cont_rhs)
            lo[-1], ce[-1], up[-1], r[-1] = c_prev, c_last, 0.0, rhs_last
            new_v = solve_banded((1, 1), _banded(lo, ce, up), r)
            g = _apply(lower, centre, upper, new_v) - cont_rhs
            # switch only on a strict improvement so round-off ties cannot cycle
            eps = 1e-13 * (1.0 + abs(payoff[-1]))
            new_stop = np.where(stop, g > -eps, (new_v - payoff) < -eps)
            new_stop[-1] = False
            if np.array_equal(new_stop, stop):
                break
            stop = new_stop
        v = new_v
    return v, stop


def resale_fixed_point(params, grid=None, horizon=None, steps=240, k_max=50, tol=1e-8,
                       scheme="hybrid", upper_bc="robin", keep_iterates=True):
    """Minimal equilibrium price as the limit of the resale iteration.

    Stage ``k`` lets each group hold the asset for an optimal stopping
    time and then resell at the stage ``k - 1`` price; the stage price is
    the better of the two groups. Each stopping problem is solved by
    implicit time stepping over ``horizon`` (default ``12 / lam``) in
    ``steps`` steps with a fully implicit stop decision at every step.

    Returns
    -------
    ResaleReport
        ``converged`` is True once the sup-norm increment between stages
        drops below ``tol``; otherwise the report stops at ``k_max``.

    Raises
    ------
    ConsistencyError
        If an iterate decreases anywhere by more than ``1e-12``.
    """
    _require_normalized(params)
    if steps < 1 or k_max < 0:
        raise DomainError("steps must be >= 1 and k_max >= 0")
    grid = Grid.for_params(params) if grid is None else grid
    grid.validate_for(params)
    horizon = 12.0 / params.lam if horizon is None else float(horizon)
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    dt = horizon / steps
    d = grid.nodes
    lam = params.lam
    c_prev, c_last, rhs_last = _far_field_row(params, grid, upper_bc)
    # row N is kept in the same negated form; rows 0..N-1 use
    # (1 + lam dt) v - dt L v
    systems = {}
    for i in (1, 2):
        lo, ce, up = discrete_operator(params, i, grid, scheme)
        systems[i] = (-dt * lo, (1.0 + lam * dt) - dt * ce, -dt * up,
                      -c_prev, -c_last, -rhs_last)

    intrinsic = intrinsic_value(params, d)
    price = intrinsic.copy()
    iterates = [price.copy()] if keep_iterates else []
    increments = []
    max_decrease = 0.0
    stops = {i: np.zeros(grid.n, dtype=bool) for i in (1, 2)}
    converged = k_max == 0
    policy = np.ones(grid.n, dtype=int)
    k = 0
    for k in range(1, k_max + 1):
        stage = {}
        for i in (1, 2):
            stage[i], stops[i] = _stopping_stage(systems[i], price, steps, dt, d, stops[i])
        new_price = np.maximum(stage[1], stage[2])
        policy = np.where(stage[2] > stage[1], 2, 1)
        diff = new_price - price
        max_decrease = max(max_decrease, float(-np.min(diff)))
        if max_decrease > 1e-12:
            raise ConsistencyError(f"resale iterate {k} decreased by {max_decrease:.3g}")
        increment = float(np.max(np.abs(diff)))
        increments.append(increment)
        price = new_price
        if keep_iterates:
            iterates.append(price.copy())
        if increment < tol:
            converged = True
            break

    res = np.max(np.vstack([_apply(*discrete_operator(params, i, grid, scheme), price)
                            for i in (1, 2)]), axis=0) - lam * price + d
    res[-1] = 0.0
    return ResaleReport(grid=grid, values=price, policy=policy, iterations=k,
                        final_residual=float(np.max(np.abs(res[:-1]))), converged=converged,
                        intrinsic=intrinsic, iterates=iterates, increments=increments,
                        max_decrease=max_decrease)


def supersolution_residuals(values, params, grid, stencil="central", scheme="hybrid"):
    """``-max_i L_i phi + lam phi - d`` at every interior node.

    ``stencil="central"`` uses plain central differences for both
    derivatives; ``stencil="scheme"`` reuses the solver's stencil, for
    which a converged solution gives zero up to round-off.
    """
    _require_normalized(params)
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise DomainError(f"values must have shape ({grid.n},)")
    d = grid.nodes
    h = grid.spacing
    if stencil == "central":
        p1 = (values[2:] - values[:-2]) / (2 * h)
        p2 = (values[2:] - 2 * values[1:-1] + values[:-2]) / h**2
        di = d[1:-1]
        ops = [params.kappa(i) * (params.theta(i) - di) * p1
               + 0.5 * params.sigma(i) ** 2 * di * p2 for i in (1, 2)]
        best = np.maximum(ops[0], ops[1])
    elif stencil == "scheme":
        best = np.max(np.vstack([_apply(*discrete_operator(params, i, grid, scheme), values)
                                 for i in (1, 2)]), axis=0)[1:-1]
    else:
        raise DomainError(f"stencil must be 'central' or 'scheme', got {stencil!r}")
    return -best + params.lam * values[1:-1] - d[1:-1]


def supersolution_residual(values, params, grid, node, stencil="central", scheme="hybrid"):
    """Supersolution residual at one interior ``node`` (see :func:`supersolution_residuals`)."""
    if not (0 < node < grid.n - 1):
        raise DomainError(f"node {node} is not interior (needs 0 < node < {grid.n - 1})")
    return float(supersolution_residuals(values, params, grid, stencil, scheme)[node - 1])
