"""Monte Carlo simulation of the dividend process under one group's belief.

Paths are generated in fixed blocks of :data:`BLOCK_SIZE` paths; block
``b`` draws from its own stream seeded by ``SeedSequence(seed,
spawn_key=(b,))``. A given configuration therefore yields the same
ensemble no matter how many workers run or in which order blocks
finish, and estimators sum per-path values with :func:`math.fsum`,
which is exact and hence order independent. Draws are vectorized over
a block, so changing ``paths`` can change the paths of the last block.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import DomainError, RegimeError
from .market_model import ModelParams, conditional_mean, conditional_variance, thresholds

__all__ = [
    "BLOCK_SIZE",
    "SimConfig",
    "McEstimate",
    "PathEnsemble",
    "simulate_paths",
    "mc_intrinsic",
    "mc_stopping_value",
    "conditional_mean_check",
    "conditional_variance_check",
]

BLOCK_SIZE = 4096
SCHEMES = ("exact", "euler")
QUADRATURES = ("conditional", "trapezoid")


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``dt`` is an upper bound: the horizon is cut into
    ``ceil(horizon / dt)`` equal steps.
    """

    group: int = 1
    d0: float = 0.0
    horizon: float = 100.0
    dt: float = 1e-2
    paths: int = 10_000
    seed: int = 0
    scheme: str = "exact"

    def __post_init__(self):
        if self.group not in (1, 2):
            raise DomainError(f"group must be 1 or 2, got {self.group}")
        for name in ("d0", "horizon", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if self.d0 < 0:
            raise DomainError(f"d0 must be nonnegative, got {self.d0}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if self.horizon < self.dt:
            raise DomainError(f"horizon ({self.horizon}) must be at least dt ({self.dt})")
        if not (isinstance(self.paths, (int, np.integer)) and self.paths >= 1):
            raise DomainError(f"paths must be a positive integer, got {self.paths}")
        if not (isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.scheme not in SCHEMES:
            raise DomainError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")

    @property
    def steps(self):
        return max(1, math.ceil(self.horizon / self.dt - 1e-9))

    @property
    def times(self):
        return np.linspace(0.0, self.horizon, self.steps + 1)

    @classmethod
    def for_params(cls, params, group=1, d0=0.0, **kwargs):
        """Config with the default horizon ``12 / lam``."""
        kwargs.setdefault("horizon", 12.0 / params.lam)
        return cls(group=group, d0=d0, **kwargs)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    paths: int

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError("std_error must be nonnegative")

    def z_score(self, target):
        diff = self.mean - target
        if self.std_error == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.std_error

    def within(self, target, k=3.0):
        """True when ``|mean - target| <= k * std_error``."""
        return abs(self.mean - target) <= k * self.std_error

    def __str__(self):
        return f"{self.mean:.10g} ± {self.std_error:.3g} ({self.paths} paths)"


@dataclass(frozen=True)
class PathEnsemble:
    """``values[j, k]`` is path ``j`` at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray

    @property
    def final(self):
        return self.values[:, -1]


def _check_params(params, group):
    if not isinstance(params, ModelParams):
        raise DomainError(f"expected ModelParams, got {type(params).__name__}")
    if params.feller_ratio(group) < 1:
        raise DomainError(f"Feller condition fails for group {group}")


def _block_paths(params, cfg, block, n):
    """Simulate ``n`` paths of block ``block``; returns shape ``(n, steps + 1)``."""
    g = cfg.group
    k, th, s = params.kappa(g), params.theta(g), params.sigma(g)
    times = cfg.times
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed, spawn_key=(block,))))
    out = np.empty((n, times.size))
    out[:, 0] = cfg.d0
    x = out[:, 0].copy()
    for step, h in enumerate(np.diff(times), start=1):
        if cfg.scheme == "exact":
            e = math.exp(-k * h)
            c = s * s * (1.0 - e) / (4.0 * k)
            df = 4.0 * k * th / (s * s)
            x = c * rng.noncentral_chisquare(df, x * e / c)
        else:
            xp = np.maximum(x, 0.0)
            x = x + k * (th - xp) * h + s * np.sqrt(xp * h) * rng.standard_normal(n)
        out[:, step] = x if cfg.scheme == "exact" else np.maximum(x, 0.0)
    return out


def _blocks(cfg):
    full, rest = divmod(cfg.paths, BLOCK_SIZE)
    sizes = [BLOCK_SIZE] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _per_path(params, cfg, fn, workers):
    """Apply ``fn(block_paths)`` to every block, returning per-path values in path order."""
    _check_params(params, cfg.group)
    blocks = _blocks(cfg)
    job = lambda b: fn(_block_paths(params, cfg, b[0], b[1]))
    if workers is None or workers <= 1:
        parts = [job(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    return np.concatenate(parts)


def _estimate(samples):
    n = samples.size
    mean = math.fsum(samples) / n
    if n < 2:
        return McEstimate(mean=mean, std_error=0.0, paths=n)
    var = math.fsum((samples - mean) ** 2) / (n - 1)
    return McEstimate(mean=mean, std_error=math.sqrt(var / n), paths=n)


def simulate_paths(params, cfg, workers=1):
    """Simulate ``cfg.paths`` trajectories of the dividend rate under ``cfg.group``.

    The default ``exact`` scheme samples the noncentral chi-square
    transition, so every value is strictly positive under the Feller
    condition. ``euler`` is full-truncation Euler, kept as a cross-check.
    Output is bit-identical for a fixed ``(params, cfg)``.
    """
    values = _per_path(params, cfg, lambda block: block, workers)
    return PathEnsemble(times=cfg.times, values=values)


def _step_integrals(params, group, paths, times, quadrature):
    """Discounted dividend integral over each step, shape ``(paths, steps)``."""
    lam = params.lam
    h = np.diff(times)
    disc = np.exp(-lam * times)
    if quadrature == "trapezoid":
        f = paths * disc
        return 0.5 * h * (f[:, :-1] + f[:, 1:])
    # E[int_t^{t+h} e^{-lam s} D_s ds | D_t], exact for the CIR mean
    k, th = params.kappa(group), params.theta(group)
    w0 = -np.expm1(-lam * h) / lam
    w1 = -np.expm1(-(lam + k) * h) / (lam + k)
    left = paths[:, :-1]
    return disc[:-1] * (th * w0 + (left - th) * w1)


def _tail(params, group, d, t):
    k, th, lam = params.kappa(group), params.theta(group), params.lam
    return math.exp(-lam * t) * (th / lam + (d - th) / (lam + k))


def mc_intrinsic(params, group, d0, cfg, quadrature="conditional", workers=1):
    """Estimate group ``group``'s buy-and-hold value ``E[int_0^inf e^{-lam t} D_t dt]``.

    The integral is taken up to ``cfg.horizon`` and completed with the
    analytic tail ``e^{-lam T} (theta/lam + (D_T - theta)/(lam + kappa))``.
    With ``quadrature="conditional"`` each step contributes the exact
    conditional expectation of its integral given the left endpoint,
    which keeps the estimator unbiased for any step size;
    ``"trapezoid"`` is the plain trapezoidal rule.
    """
    if quadrature not in QUADRATURES:
        raise DomainError(f"quadrature must be one of {QUADRATURES}, got {quadrature!r}")
    cfg = replace(cfg, group=group, d0=d0)
    if cfg.horizon < 12.0 / params.lam * (1 - 1e-12):
        raise DomainError(f"horizon must be at least 12/lam = {12.0 / params.lam}")
    times = cfg.times

    def fn(block):
        acc = _step_integrals(params, group, block, times, quadrature).sum(axis=1)
        return acc + _tail(params, group, block[:, -1], times[-1])

    return _estimate(_per_path(params, cfg, fn, workers))


def mc_stopping_value(params, holder, d0, continuation, cfg, rule="crossing", workers=1):
    """Estimate the value of holding until ``tau`` and then receiving ``continuation(D_tau)``.

    Parameters
    ----------
    holder : {1, 2}
        Group whose belief drives the paths.
    continuation : callable
        Vectorized price function applied at the stopping time.
    rule : "crossing" or float
        ``"crossing"`` stops at the first grid time where ``D`` reaches
        the other side of the trading boundary, or at the horizon if it
        never does. A number is a constant stopping time that must lie
        on the time grid; ``0`` returns ``continuation(d0)`` exactly.
    """
    cfg = replace(cfg, group=holder, d0=d0)
    times = cfg.times
    lam = params.lam
    if rule == "crossing":
        th = thresholds(params)
        if th.d_tilde is None:
            raise RegimeError("crossing rule needs a trading boundary (kappa1 != kappa2)")
        boundary = th.d_tilde
        if d0 == boundary:
            return McEstimate(mean=float(continuation(np.array([d0]))[0]), std_error=0.0,
                              paths=cfg.paths)
        below = d0 < boundary
        stop_index = None
    else:
        tau = float(rule)
        if tau < 0 or not math.isfinite(tau):
            raise DomainError(f"stopping time must be finite and nonnegative, got {rule!r}")
        if tau == 0:
            return McEstimate(mean=float(continuation(np.array([d0]))[0]), std_error=0.0,
                              paths=cfg.paths)
        hits = np.flatnonzero(np.abs(times - tau) <= 1e-9 * max(1.0, tau))
        if hits.size == 0:
            raise DomainError(f"stopping time {tau} is not on the time grid")
        stop_index = int(hits[0])

    def fn(block):
        n, m = block.shape
        if stop_index is None:
            crossed = block[:, 1:] >= boundary if below else block[:, 1:] <= boundary
            first = np.where(crossed.any(axis=1), crossed.argmax(axis=1) + 1, m - 1)
        else:
            first = np.full(n, stop_index)
        pieces = _step_integrals(params, holder, block, times, "conditional")
        csum = np.concatenate([np.zeros((n, 1)), np.cumsum(pieces, axis=1)], axis=1)
        rows = np.arange(n)
        d_tau = block[rows, first]
        cont = np.asarray(continuation(d_tau), dtype=float)
        return csum[rows, first] + np.exp(-lam * times[first]) * cont

    return _estimate(_per_path(params, cfg, fn, workers))


def _horizon_cfg(cfg, group, d0, t):
    return replace(cfg, group=group, d0=d0, horizon=t, dt=min(cfg.dt, t))


def conditional_mean_check(params, group, d0, t, cfg, workers=1):
    """Ensemble mean of ``D_t`` minus its closed-form conditional mean.

    A correct sampler gives an estimate within a few standard errors of
    zero. ``t = 0`` returns exactly zero with zero error.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        SimConfig(group=group, d0=d0)  # validates group and d0
        return McEstimate(mean=0.0, std_error=0.0, paths=cfg.paths)
    cfg = _horizon_cfg(cfg, group, d0, t)
    target = conditional_mean(params, group, d0, t)
    finals = _per_path(params, cfg, lambda block: block[:, -1], workers)
    est = _estimate(finals)
    return McEstimate(mean=est.mean - target, std_error=est.std_error, paths=est.paths)


def conditional_variance_check(params, group, d0, t, cfg, workers=1):
    """Sample variance of ``D_t`` minus the closed-form conditional variance.

    The standard error uses the fourth central moment of the ensemble.
    """
    if t <= 0:
        raise DomainError("t must be positive")
    cfg = _horizon_cfg(cfg, group, d0, t)
    finals = _per_path(params, cfg, lambda block: block[:, -1], workers)
    n = finals.size
    if n < 2:
        raise DomainError("variance check needs at least 2 paths")
    mean = math.fsum(finals) / n
    dev = finals - mean
    var = math.fsum(dev**2) / (n - 1)
    m4 = math.fsum(dev**4) / n
    se = math.sqrt(max(m4 - var * var, 0.0) / n)
    return McEstimate(mean=var - conditional_variance(params, group, d0, t), std_error=se, paths=n)
