import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from divratchet import model
from divratchet.model import ModelParams

rates = st.floats(0.0, 50.0, allow_nan=False)


@pytest.mark.parametrize("bad", [(0, 2, 0.1), (4, -1, 0.1), (4, 2, 0), (float("nan"), 2, 0.1), (4, 2, float("inf"))])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        ModelParams(*bad)


@settings(max_examples=200, deadline=None)
@given(c=rates)
def test_vieta_identities(params, c):
    r = model.theta_roots(params, c)
    assert r.theta1 > 0 > r.theta2
    assert r.theta1 * r.theta2 == pytest.approx(-2 * params.q / params.sigma2, rel=1e-12)
    assert r.theta1 + r.theta2 == pytest.approx(-2 * (params.mu - c) / params.sigma2, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("c", [0.0, 0.5, 3.999, 4.0, 4.001, 8.0, 40.0])
def test_roots_match_high_precision(params, c):
    r = model.theta_roots(params, c)
    t1, t2 = oracles.roots(params, c)
    assert r.theta1 == pytest.approx(float(t1), rel=1e-14)
    assert r.theta2 == pytest.approx(float(t2), rel=1e-14)
    p1, p2 = model.theta_derivatives(params, c)
    o1, o2 = oracles.root_primes(params, c)
    assert p1 == pytest.approx(float(o1), rel=1e-13)
    assert p2 == pytest.approx(float(o2), rel=1e-13)


def test_root_derivatives_at_zero(params):
    p1, p2 = model.theta_derivatives(params, 0.0)
    assert p1 == pytest.approx(0.006024, abs=2e-6)
    assert p2 == pytest.approx(0.49398, abs=1e-5)


@settings(max_examples=100, deadline=None)
@given(c=rates)
def test_root_derivatives_bounded(params, c):
    p1, p2 = model.theta_derivatives(params, c)
    assert 0 < p1 < 2 / params.sigma2
    assert 0 < p2 < 2 / params.sigma2
    assert p1 + p2 == pytest.approx(2 / params.sigma2, rel=1e-12)


def test_array_and_scalar_shapes(params):
    assert isinstance(model.v_constant(params, 4.0, 5.0), float)
    xs = np.linspace(0, 10, 7)
    assert model.v_constant(params, 4.0, xs).shape == (7,)
    b0, b1 = model.b_funcs(params, 2.0, xs)
    assert b0.shape == b1.shape == (7,)
    d = model.b_partials(params, 2.0, 3.0)
    assert isinstance(d.d2b0_dxc, float)


def test_constant_rate_value(params):
    v = model.v_constant(params, 4.0, 5.0)
    assert v == pytest.approx(float(oracles.v_constant(params, 4, 5)), rel=1e-14)
    assert v == pytest.approx(26.9232, abs=1e-4)
    assert model.v_constant(params, 4.0, 0.0) == 0.0


@pytest.mark.parametrize("c", [0.0, 1.0, 4.0, 7.5])
def test_constant_rate_solves_generator(params, c):
    xs = np.linspace(0.1, 20, 50)
    _, t2, _ = model._roots(params, c)
    w = model.v_constant(params, c, xs)
    wx = model.v_constant_dx(params, c, xs)
    wxx = -(c / params.q) * t2 * t2 * np.exp(t2 * xs)
    assert np.max(np.abs(model.generator_residual(params, c, w, wx, wxx))) < 1e-12 * c / params.q + 1e-13


@pytest.mark.parametrize("c,a", [(0.0, 0.3), (2.0, 0.01), (4.0, 1e-3)])
def test_two_exponential_family(params, c, a):
    xs = np.linspace(0.0, 8.0, 41)
    res = model.generator_residual(
        params, c, model.u_value(params, c, a, xs), model.u_dx(params, c, a, xs), model.u_dxx(params, c, a, xs)
    )
    scale = c / params.q + a * math.exp(8.0 * model.theta_roots(params, c).theta1)
    assert np.max(np.abs(res)) < 1e-12 * scale
    assert model.u_value(params, c, a, 0.0) == 0.0
    xi = model.inflection_point(params, c, a)
    assert model.u_dxx(params, c, a, xi) == pytest.approx(0.0, abs=1e-10 * scale)


def test_barrier_and_unrestricted_value(params):
    b = model.b_star(params, 4.0)
    assert b == pytest.approx(float(oracles.barrier(params, 4.0)), rel=1e-12)
    assert b == pytest.approx(3.1172, abs=2e-4)
    lo = model.v_unrestricted(params, 4.0, b * (1 - 1e-12))
    hi = model.v_unrestricted(params, 4.0, b * (1 + 1e-12))
    assert lo == pytest.approx(hi, rel=1e-10)
    assert model.v_unrestricted_dx(params, 4.0, b) == pytest.approx(1.0, rel=1e-12)
    assert model.v_unrestricted(params, 4.0, 0.0) == pytest.approx(0.0, abs=1e-15)
    # dominates every constant rate strategy
    xs = np.linspace(0, 30, 301)
    for c in (0.5, 2.0, 4.0):
        assert np.all(model.v_unrestricted(params, 4.0, xs) >= model.v_constant(params, c, xs) - 1e-12)


def test_barrier_rejects_bad_cap(params):
    with pytest.raises(ValueError):
        model.b_star(params, 0.0)


POINTS = [(0.0, 0.5), (0.0, 5.0), (1.0, 0.05), (2.0, 2.0), (4.0, 0.3), (4.0, 10.0), (7.0, 1e-3), (8.0, 25.0)]


@pytest.mark.parametrize("c,x", POINTS)
def test_b_functions_match_definition(params, c, x):
    b0, b1 = model.b_funcs(params, c, x)
    assert b0 == pytest.approx(float(oracles.b0(params, c, x)), rel=1e-12, abs=1e-13)
    assert b1 == pytest.approx(float(oracles.b1(params, c, x)), rel=1e-12, abs=1e-13)
    assert model.db0_dx(params, c, x) == pytest.approx(float(oracles.dx(oracles.b0, params, c, x)), rel=1e-11, abs=1e-13)
    assert model.db1_dx(params, c, x) == pytest.approx(float(oracles.dx(oracles.b1, params, c, x)), rel=1e-11, abs=1e-13)


@pytest.mark.parametrize("c", [0.0, 2.0, 4.0, 9.0])
def test_b_limits_at_origin(params, c):
    lim = model.b_limits(params, c)
    tiny = mp.mpf("1e-20")
    assert lim[0] == pytest.approx(float(oracles.b0(params, c, tiny)), rel=1e-12)
    assert lim[1] == pytest.approx(float(oracles.b1(params, c, tiny)), rel=1e-12)
    near = model.b_funcs(params, c, 0.0)
    assert near[0] == pytest.approx(lim[0], rel=1e-12)
    assert near[1] == pytest.approx(lim[1], rel=1e-12)
    assert model.db0_dx(params, c, 1e-9) == pytest.approx(lim[2], rel=1e-7)
    assert model.db1_dx(params, c, 1e-9) == pytest.approx(lim[3], rel=1e-7)


@pytest.mark.parametrize("c,x", POINTS[1:])
def test_second_partials_match_oracle(params, c, x):
    d = model.b_partials(params, c, x)
    for got, f, kind in [
        (d.d2b0_dxx, oracles.b0, "xx"), (d.d2b1_dxx, oracles.b1, "xx"),
        (d.d2b0_dxc, oracles.b0, "xc"), (d.d2b1_dxc, oracles.b1, "xc"),
    ]:
        ref = float(oracles.dx(f, params, c, x, 2) if kind == "xx" else oracles.dxc(f, params, c, x))
        assert got == pytest.approx(ref, rel=1e-6, abs=1e-9)


def test_b_partials_vectorised_equals_scalar(params):
    xs = np.array([0.3, 2.0, 9.0])
    cs = np.array([0.0, 1.5, 4.0])
    vec = model.b_partials(params, cs, xs)
    for k in range(3):
        one = model.b_partials(params, cs[k], xs[k])
        assert vec.d2b0_dxc[k] == one.d2b0_dxc
        assert vec.db1_dx[k] == one.db1_dx


def test_trivial_threshold(params):
    assert model.trivial_threshold(params) == pytest.approx(0.05)
