"""Acceptance criteria, one test each; every test records a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import time

import numpy as np
import pytest

import oracles
from divratchet import curve, finite, model, simulate
from divratchet.curve import CurveOptions
from divratchet.finite import RateGrid
from divratchet.simulate import Constant, Curve, SimConfig

SCALE = 4.0 / 0.1  # cbar / q


@pytest.fixture(scope="module")
def curve4(params):
    return curve.solve_continuum(params, 4.0)


@pytest.fixture(scope="module")
def curve8(params):
    return curve.solve_continuum(params, 8.0)


def test_c1_constant_rate_monte_carlo(params, criterion):
    t0 = time.perf_counter()
    est = simulate.simulate_value(params, Constant(4.0), 5.0, 4.0, SimConfig(dt=1e-3, n_paths=200_000, seed=0))
    secs = time.perf_counter() - t0
    exact = float(oracles.v_constant(params, 4, 5))
    ok = abs(est.mean - 26.9232) <= 3 * est.std_error and abs(exact - 26.9232) < 1e-4 and secs <= 60
    criterion(1, "closed form vs Monte Carlo, Constant(4), x0=5", ok,
              f"mean={est.mean:.4f} se={est.std_error:.4f} exact={exact:.5f} t={secs:.1f}s")


def test_c2_curve_policy_monte_carlo(params, curve4, criterion):
    pol, _ = curve4
    probes = [(5.0, 0.0), (float(pol.zeta_at(2.0)), 2.0), (2.0, 0.0), (8.0, 1.0), (12.0, 3.0)]
    worst, parts = 0.0, []
    for k, (x, c) in enumerate(probes):
        est = simulate.simulate_value(params, Curve(pol), x, c, SimConfig(dt=1e-3, n_paths=100_000, seed=100 + k))
        w = float(curve.w_eval(pol, x, c))
        z = (est.mean - w) / est.std_error
        worst = max(worst, abs(z))
        parts.append(f"({x:.3g},{c:g}):{z:+.2f}se")
    criterion(2, "curve policy analytic value vs Monte Carlo at 5 probes", worst <= 3.0, " ".join(parts))


def test_c3_optimality_identity(params, curve4, criterion):
    pol, _ = curve4
    inner = slice(1, -1)
    b = model.b_partials(params, pol.c_grid, pol.zeta)
    res = float(np.max(np.abs(pol.A_ode * b.db1_dx + b.db0_dx)))
    a_top = abs(float(pol.A[0]))
    ok = res <= 1e-6 * SCALE and a_top <= 1e-12 and bool(np.all(pol.A[inner] > 0))
    criterion(3, "optimality identity along the integrated curve", ok,
              f"max|A b1x + b0x|={res:.2e} A(cbar)={a_top:.1e}")


def test_c4_verification_suite(curve4, curve8, criterion):
    r4, r8 = curve4[1], curve8[1]
    ok = r4.passed and r8.passed and max(r4.max_dcx, r4.max_dcc, r8.max_dcx, r8.max_dcc) <= 1e-4
    criterion(4, "verification suite at tol 1e-4 for cbar=4 and cbar=8", ok,
              f"cbar4 dcx={r4.max_dcx:.1e} dcc={r4.max_dcc:.1e}; cbar8 dcx={r8.max_dcx:.1e} dcc={r8.max_dcc:.1e}")


def test_c5_trivial_regime(params, criterion):
    cbar = 0.04
    xs = np.linspace(0, 40, 400)
    pol = finite.solve_thresholds(params, RateGrid([0.0, 0.02, cbar]))
    cpol, _ = curve.solve_continuum(params, cbar)
    ref = model.v_constant(params, cbar, xs)
    err_f = max(float(np.max(np.abs(finite.wz_eval(pol, xs, i) - ref))) for i in range(3))
    err_c = max(float(np.max(np.abs(curve.w_eval(cpol, xs, c) - ref))) for c in (0.0, 0.01, 0.04))
    ok = cbar <= model.trivial_threshold(params) and np.all(pol.z == 0) and np.all(cpol.zeta == 0) \
        and err_f <= 1e-12 and err_c <= 1e-12
    criterion(5, "trivial regime cbar=0.04", ok, f"finite err={err_f:.1e} curve err={err_c:.1e}")


def test_c6_ordering_chain(params, curve4, curve8, criterion):
    pol, _ = curve4
    b4 = model.b_star(params, 4.0)
    xs = np.linspace(0, 4 * b4, 400)
    one = finite.solve_thresholds(params, RateGrid([0, 4]))
    vc = model.v_constant(params, 4.0, xs)
    v1 = finite.wz_eval(one, xs, 0)
    ws = curve.w_eval(pol, xs, 0.0)
    vnr = model.v_unrestricted(params, 4.0, xs)
    slack = 1e-6 * SCALE
    chain = bool(np.all(vc <= v1 + slack) and np.all(v1 <= ws + slack) and np.all(ws <= vnr + slack))
    z4 = float(pol.zeta[-1])
    z8, b8 = float(curve8[0].zeta[-1]), model.b_star(params, 8.0)
    ok = chain and z4 >= b4 and abs(b4 - 3.1172) <= 2e-4 and z8 < b8
    criterion(6, "ordering chain and curve vs unrestricted barrier", ok,
              f"zeta(0)={z4:.5f} b*={b4:.5f} (cbar=4); zeta(0)={z8:.5f} b*={b8:.5f} (cbar=8)")


def test_c7_discrete_to_continuous(params, curve4, criterion):
    t0 = time.perf_counter()
    tab = finite.convergence_study(params, 4.0, 6)
    secs = time.perf_counter() - t0
    d = tab.d[1:]
    fine = tab.policies[6]
    gap = max(float(np.max(curve.w_eval(curve4[0], tab.x_lattice, c) - finite.wz_eval(fine, tab.x_lattice, i)))
              for i, c in enumerate(fine.grid.rates))
    ok = bool(np.all(d >= 0) and np.all(np.diff(d) < 0)) and gap <= 5 * d[-1] and secs <= 300
    criterion(7, "dyadic grids converge to the curve policy", ok,
              f"d_1..d_6=[{' '.join(f'{v:.2e}' for v in d)}] sup gap={gap:.2e} t={secs:.1f}s")


def test_c8_two_approaches_agree(params, criterion):
    grid = RateGrid([0, 1, 2, 3, 4])
    pol = finite.solve_thresholds(params, grid)
    obs = finite.obstacle_cross_check(params, grid)
    diff = float(np.max(np.abs(pol.z - obs.z)))
    foc = max(abs(finite.foc_residual(pol, i)) for i in range(grid.n - 1) if pol.z[i] > 0)
    ok = diff <= 1e-5 and foc <= 1e-6 * SCALE
    criterion(8, "argmax vs obstacle thresholds and first-order condition", ok, f"max dz={diff:.1e} foc={foc:.1e}")


def test_c9_numerics_hygiene(params, curve4, criterion):
    pol, _ = curve4
    steps = pol.meta["steps"]
    half = curve.integrate_curve(params, 0.0, 4.0, CurveOptions(steps=2 * steps))
    rel = abs(half.zeta[-1] - pol.zeta[-1]) / pol.zeta[-1]
    rng = np.random.default_rng(2024)
    worst = 0.0
    for c, x in zip(rng.uniform(0, 8, 20), rng.uniform(0.05, 20, 20)):
        d = model.b_partials(params, c, x)
        pairs = [
            (d.db0_dx, oracles.dx(oracles.b0, params, c, x)), (d.db1_dx, oracles.dx(oracles.b1, params, c, x)),
            (d.d2b0_dxx, oracles.dx(oracles.b0, params, c, x, 2)), (d.d2b1_dxx, oracles.dx(oracles.b1, params, c, x, 2)),
            (d.d2b0_dxc, oracles.dxc(oracles.b0, params, c, x)), (d.d2b1_dxc, oracles.dxc(oracles.b1, params, c, x)),
        ]
        for got, ref in pairs:
            ref = float(ref)
            worst = max(worst, abs(got - ref) / max(abs(ref), 1e-12))
    cs = np.linspace(0, 50, 501)
    r = model.theta_roots(params, cs)
    prod = np.abs(r.theta1 * r.theta2 / (-2 * params.q / params.sigma2) - 1)
    # the sum vanishes at c = mu, so compare it on the scale of the roots
    total = np.abs((r.theta1 + r.theta2) + 2 * (params.mu - cs) / params.sigma2) / r.theta1
    vieta = float(max(np.max(prod), np.max(total)))
    ok = rel <= 1e-6 and worst <= 1e-6 and vieta <= 1e-12
    criterion(9, "step halving, partials vs oracle, root identities", ok,
              f"halving rel={rel:.1e} partials rel={worst:.1e} vieta={vieta:.1e}")
