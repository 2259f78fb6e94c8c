import numpy as np
import pytest

from cirbubble import closed_form as cf
from cirbubble.exceptions import DomainError, RegimeError
from cirbubble.market_model import ModelParams, group_value, intrinsic_value, normalize_params
from cirbubble.mc import (
    BLOCK_SIZE,
    McEstimate,
    SimConfig,
    conditional_mean_check,
    conditional_variance_check,
    mc_intrinsic,
    mc_stopping_value,
    simulate_paths,
)


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(dt=0.0)
    with pytest.raises(DomainError):
        SimConfig(horizon=0.001, dt=0.01)
    with pytest.raises(DomainError):
        SimConfig(paths=0)
    with pytest.raises(DomainError):
        SimConfig(seed=-1)
    with pytest.raises(DomainError):
        SimConfig(d0=-0.1)
    with pytest.raises(DomainError):
        SimConfig(group=3)
    with pytest.raises(DomainError):
        SimConfig(scheme="milstein")
    assert SimConfig(horizon=1.0, dt=0.3).steps == 4


def test_estimate_helpers():
    e = McEstimate(1.0, 0.1, 10)
    assert e.within(1.25) and not e.within(1.31)
    assert e.z_score(0.8) == pytest.approx(2.0)
    assert McEstimate(1.0, 0.0, 1).z_score(1.0) == 0.0
    with pytest.raises(ValueError):
        McEstimate(1.0, -1.0, 1)


def test_determinism_and_worker_independence(initial1):
    cfg = SimConfig(d0=0.05, horizon=2.0, dt=0.5, paths=BLOCK_SIZE + 17, seed=42)
    a = simulate_paths(initial1, cfg)
    b = simulate_paths(initial1, cfg)
    c = simulate_paths(initial1, cfg, workers=3)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.values, c.values)
    assert a.values.shape == (BLOCK_SIZE + 17, 5)


def test_positive_paths(initial2):
    ens = simulate_paths(initial2, SimConfig(group=1, d0=0.001, horizon=20.0, dt=0.1, paths=2000, seed=1))
    assert np.all(ens.values[:, 1:] > 0)


def test_stationary_mean(initial1):
    ens = simulate_paths(initial1, SimConfig(group=2, d0=0.02, horizon=200.0, dt=50.0, paths=20000, seed=3))
    final = ens.final
    se = final.std() / np.sqrt(final.size)
    assert abs(final.mean() - 0.02) < 3 * se


def test_conditional_mean_checks(initial1):
    cfg = SimConfig(paths=20000, dt=1.0, seed=5)
    assert conditional_mean_check(initial1, 1, 0.1, 5.0, cfg).within(0.0)
    assert conditional_mean_check(initial1, 2, 0.3, 3.0, cfg).within(0.0)
    zero = conditional_mean_check(initial1, 1, 0.1, 0.0, cfg)
    assert zero.mean == 0.0 and zero.std_error == 0.0


def test_conditional_variance_check(initial1):
    est = conditional_variance_check(initial1, 1, 0.1, 5.0, SimConfig(paths=20000, dt=5.0, seed=9))
    assert abs(est.z_score(0.0)) < 5


def test_euler_scheme_close(initial1):
    cfg = SimConfig(paths=20000, dt=0.01, seed=8, scheme="euler")
    assert abs(conditional_mean_check(initial1, 1, 0.1, 2.0, cfg).z_score(0.0)) < 4


def test_feller_checked():
    # bypass construction checks to hand the sampler an invalid group
    p = object.__new__(ModelParams)
    for k, v in dict(kappa1=0.2, kappa2=0.1, theta1=0.001, theta2=0.02, sigma1=0.05, sigma2=0.02, lam=0.02).items():
        object.__setattr__(p, k, v)
    with pytest.raises(DomainError, match="Feller"):
        simulate_paths(p, SimConfig(paths=2, horizon=1.0, dt=0.5))


def test_intrinsic_estimates():
    equal = normalize_params(0.1, 0.1, 0.02, 0.02, 0.02, 0.02, 0.02)
    cfg = SimConfig.for_params(equal, dt=4.0, paths=8000, seed=11)
    assert mc_intrinsic(equal, 1, 0.02, cfg).within(1.0)


def test_intrinsic_group_two_and_lower_group(initial2):
    cfg = SimConfig.for_params(initial2, dt=4.0, paths=8000, seed=12)
    assert mc_intrinsic(initial2, 2, 0.02, cfg).within(1.0)
    low = mc_intrinsic(initial2, 1, 0.2, cfg)
    assert low.mean + 3 * low.std_error < intrinsic_value(initial2, 0.2)


def test_trapezoid_option(initial2):
    cfg = SimConfig.for_params(initial2, dt=0.5, paths=4000, seed=13)
    est = mc_intrinsic(initial2, 2, 0.05, cfg, quadrature="trapezoid")
    assert abs(est.z_score(float(group_value(initial2, 2, 0.05)))) < 4


def test_intrinsic_requires_long_horizon(initial2):
    with pytest.raises(DomainError):
        mc_intrinsic(initial2, 1, 0.02, SimConfig(horizon=10.0, dt=1.0))
    with pytest.raises(DomainError):
        mc_intrinsic(initial2, 1, 0.02, SimConfig.for_params(initial2), quadrature="simpson")


def test_stopping_immediate_and_constant(initial1):
    cont = lambda d: intrinsic_value(initial1, d)
    cfg = SimConfig.for_params(initial1, dt=0.5, paths=2000, seed=1)
    now = mc_stopping_value(initial1, 1, 0.26, cont, cfg, rule=0.0)
    assert now.mean == intrinsic_value(initial1, 0.26) and now.std_error == 0.0
    with pytest.raises(DomainError):
        mc_stopping_value(initial1, 1, 0.26, cont, cfg, rule=0.3)
    with pytest.raises(DomainError):
        mc_stopping_value(initial1, 1, 0.26, cont, cfg, rule=-1.0)


def test_constant_time_beats_intrinsic(initial1):
    cont = lambda d: intrinsic_value(initial1, d)
    # group 2's forecast drifts back toward the kink, so waiting has value
    cfg = SimConfig(horizon=1.0, dt=1.0, paths=20_000, seed=2)
    est = mc_stopping_value(initial1, 2, 0.27, cont, cfg, rule=1.0)
    assert est.mean - 3 * est.std_error > intrinsic_value(initial1, 0.27)


def test_crossing_rule_needs_boundary():
    p = normalize_params(0.1, 0.1, 0.02, 0.02, 0.02, 0.02, 0.02)
    with pytest.raises(RegimeError):
        mc_stopping_value(p, 1, 0.02, lambda d: d, SimConfig(horizon=1.0, dt=1.0))


def test_crossing_at_boundary_is_immediate(initial2):
    c = cf.compute_paste_constants(initial2)
    est = mc_stopping_value(initial2, 1, 0.01, lambda d: cf.phi(initial2, c, d), SimConfig(horizon=1.0, dt=1.0))
    assert est.mean == pytest.approx(cf.phi(initial2, c, 0.01)) and est.std_error == 0.0


@pytest.mark.slow
def test_crossing_rule_recovers_closed_form(initial2):
    c = cf.compute_paste_constants(initial2)
    cfg = SimConfig(horizon=100.0, dt=0.25, paths=6000, seed=4)
    est = mc_stopping_value(initial2, 1, 0.005, lambda d: cf.phi(initial2, c, d), cfg)
    assert est.within(cf.phi(initial2, c, 0.005))


def test_stopping_never_beats_equilibrium(initial1):
    from cirbubble.hjb import Grid, solve_hjb

    rep = solve_hjb(initial1, Grid(2.0, 4001))
    cfg = SimConfig(horizon=4.0, dt=1.0, paths=20_000, seed=21)
    for rule in (1.0, 4.0, "crossing"):
        for holder, d0 in ((2, 0.27), (1, 0.1)):
            est = mc_stopping_value(initial1, holder, d0, rep, cfg, rule=rule)
            assert est.mean <= rep(d0) + 3 * est.std_error
