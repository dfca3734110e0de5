import numpy as np
import pytest

from divratchet import finite, model, simulate
from divratchet.simulate import Constant, OneStep, SimConfig, Threshold


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(dt=0)
    with pytest.raises(ValueError):
        SimConfig(n_paths=0)
    with pytest.raises(ValueError):
        SimConfig(n_paths=3, antithetic=True)


def test_short_horizon_rejected(params):
    with pytest.raises(ValueError):
        simulate.simulate_value(params, Constant(4.0), 5.0, 4.0, SimConfig(t_max=50.0, n_paths=10))


def test_zero_surplus_is_exact(params):
    est = simulate.simulate_value(params, Constant(4.0), 0.0, 4.0, SimConfig(n_paths=100))
    assert est.mean == 0.0 and est.std_error == 0.0


def test_constant_rate_matches_closed_form(params):
    est = simulate.simulate_value(params, Constant(4.0), 5.0, 4.0, SimConfig(n_paths=20_000, seed=11))
    exact = model.v_constant(params, 4.0, 5.0)
    assert abs(est.mean - exact) <= 3 * est.std_error
    assert est.truncation_bias_bound < 1e-6


def test_determinism_and_seed_dependence(params):
    cfg = SimConfig(n_paths=2000, seed=5)
    a = simulate.simulate_value(params, Constant(2.0), 3.0, 2.0, cfg)
    b = simulate.simulate_value(params, Constant(2.0), 3.0, 2.0, cfg)
    c = simulate.simulate_value(params, Constant(2.0), 3.0, 2.0, SimConfig(n_paths=2000, seed=6))
    assert a.mean == b.mean and a.std_error == b.std_error
    assert a.mean != c.mean


def test_one_step_strategy(params):
    pol = finite.solve_thresholds(params, finite.RateGrid([0, 4]))
    spec = OneStep(float(pol.z[0]), 0.0, 4.0)
    est = simulate.simulate_value(params, spec, 5.0, 0.0, SimConfig(n_paths=20_000, seed=3))
    assert abs(est.mean - finite.wz_eval(pol, 5.0, 0)) <= 3 * est.std_error


def test_threshold_strategy_antithetic(params):
    pol = finite.solve_thresholds(params, finite.RateGrid([0, 2, 4]))
    est = simulate.simulate_value(params, Threshold(pol), 4.0, 0.0, SimConfig(n_paths=20_000, seed=9, antithetic=True))
    assert abs(est.mean - finite.wz_eval(pol, 4.0, 0)) <= 3 * est.std_error


def test_leaping_and_bridge_do_not_bias(params):
    base = dict(n_paths=20_000, seed=2, dt=1e-2)
    exact = model.v_constant(params, 1.0, 1.0)
    plain = simulate.simulate_value(params, Constant(1.0), 1.0, 1.0, SimConfig(leap=False, **base))
    fast = simulate.simulate_value(params, Constant(1.0), 1.0, 1.0, SimConfig(**base))
    assert abs(plain.mean - exact) <= 3 * plain.std_error
    assert abs(fast.mean - exact) <= 3 * fast.std_error


def test_sample_paths_respect_ratchet(params):
    pol = finite.solve_thresholds(params, finite.RateGrid([0, 1, 2, 3, 4]))
    paths = simulate.sample_paths(params, Threshold(pol), 4.0, 0.0, SimConfig(n_paths=4, seed=1, t_max=200.0), k=4)
    assert len(paths) == 4
    for p in paths:
        assert p.t[0] == 0.0 and p.x[0] == 4.0
        assert np.all(np.diff(p.c) >= 0)
        assert np.all(np.diff(p.t) > 0)
        assert np.all(p.x[:-1] >= 0)
        # rate is raised only at or above the switching level of the current rate
        for j in np.nonzero(np.diff(p.c) > 0)[0]:
            i = int(np.searchsorted(pol.rates, p.c[j]))
            assert p.x[j + 1] >= pol.z[i] - 1e-9
    with pytest.raises(ValueError):
        simulate.sample_paths(params, Constant(1.0), 1.0, 1.0, SimConfig(n_paths=2), k=3)


def test_invalid_start(params):
    with pytest.raises(ValueError):
        simulate.simulate_value(params, Constant(1.0), -1.0, 1.0, SimConfig(n_paths=10))
    with pytest.raises(ValueError):
        simulate.simulate_value(params, OneStep(5.0, 4.0, 1.0), 1.0, 1.0, SimConfig(n_paths=10))
