"""Closed-form pieces of the Brownian dividend-ratcheting model.

Surplus ``X_t = x + mu t + sigma W_t`` pays dividends at a non-decreasing
rate until ruin; ``q`` discounts.  Everything here is an exact scalar
formula, vectorised over numpy arrays: the characteristic roots of the
generator, the constant-rate and unrestricted value functions, and the
auxiliary functions ``b0``/``b1`` whose partials drive the free-boundary ODE.

The ``b`` functions are written through ``E1(u) = expm1(u)/u`` and its
log-derivative so that they evaluate without cancellation all the way down
to ``x = 0`` (the quotients in their textbook form are 0/0 there).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import bernoulli

# Richardson steps for second / cross partials.
_FD_REL = 1e-5
_FD_MIN = 1e-5
# Below this |u| the E1 helpers switch to their Taylor series.
_SERIES_U = 0.1


@dataclass(frozen=True)
class ModelParams:
    """Drift ``mu``, volatility ``sigma`` and discount rate ``q``."""

    mu: float
    sigma: float
    q: float

    def __post_init__(self) -> None:
        for name in ("mu", "sigma", "q"):
            val = getattr(self, name)
            if not (isinstance(val, (int, float)) and math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be a positive finite number, got {val!r}")

    @property
    def sigma2(self) -> float:
        return self.sigma * self.sigma


@dataclass(frozen=True)
class CharacteristicRoots:
    theta1: float | np.ndarray
    theta2: float | np.ndarray


@dataclass(frozen=True)
class BDerivatives:
    b0: float | np.ndarray
    b1: float | np.ndarray
    db0_dx: float | np.ndarray
    db1_dx: float | np.ndarray
    d2b0_dxx: float | np.ndarray
    d2b1_dxx: float | np.ndarray
    d2b0_dxc: float | np.ndarray
    d2b1_dxc: float | np.ndarray


def _out(arr):
    arr = np.asarray(arr, dtype=float)
    return float(arr) if arr.ndim == 0 else arr


def _roots(params: ModelParams, c):
    """(theta1, theta2, s) with the small root taken from the Vieta product."""
    c = np.asarray(c, dtype=float)
    s2 = params.sigma2
    d = c - params.mu
    s = np.sqrt(d * d + 2.0 * params.q * s2)
    prod = -2.0 * params.q / s2
    # Add like-signed terms only, recover the other root from theta1*theta2.
    big_pos = (d + s) / s2
    big_neg = (d - s) / s2
    t1 = np.where(d >= 0, big_pos, prod / big_neg)
    t2 = np.where(d >= 0, prod / big_pos, big_neg)
    return t1, t2, s


def theta_roots(params: ModelParams, c) -> CharacteristicRoots:
    """Roots of ``sigma^2/2 z^2 + (mu - c) z - q = 0``, ``theta1 > 0 > theta2``."""
    t1, t2, _ = _roots(params, c)
    return CharacteristicRoots(_out(t1), _out(t2))


def _theta_primes(params: ModelParams, c, s):
    d = np.asarray(c, dtype=float) - params.mu
    # 1 +- d/s cancels for |d| >> s; use (s^2 - d^2) = 2 q sigma^2 instead
    small = 2.0 * params.q * params.sigma2 / (s * (s + np.abs(d)))
    big = 1.0 + np.abs(d) / s
    p1 = np.where(d >= 0, big, small) / params.sigma2
    p2 = np.where(d >= 0, small, big) / params.sigma2
    return p1, p2


def theta_derivatives(params: ModelParams, c):
    """``(dtheta1/dc, dtheta2/dc)``; both lie in ``(0, 2/sigma^2)``."""
    _, _, s = _roots(params, c)
    p1, p2 = _theta_primes(params, c, s)
    return _out(p1), _out(p2)


def trivial_threshold(params: ModelParams) -> float:
    """Maximal rate ``q sigma^2 / (2 mu)`` for which paying it at once is optimal."""
    return params.q * params.sigma2 / (2.0 * params.mu)


def v_constant(params: ModelParams, c, x):
    """Value of paying rate ``c`` forever (until ruin): ``c/q (1 - e^{theta2 x})``."""
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    _, t2, _ = _roots(params, c)
    return _out(-(c / params.q) * np.expm1(t2 * x))


def v_constant_dx(params: ModelParams, c, x):
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    _, t2, _ = _roots(params, c)
    return _out(-(c / params.q) * t2 * np.exp(t2 * x))


def b_star(params: ModelParams, cbar: float) -> float:
    """Barrier of the optimal unrestricted (non-ratcheting) bounded-rate strategy."""
    if cbar <= 0:
        raise ValueError("cbar must be positive")
    t1, t2, _ = _roots(params, 0.0)
    _, t2c, _ = _roots(params, cbar)
    t1, t2, t2c = float(t1), float(t2), float(t2c)
    arg = t2 * (t2 - t2c) / (t1 * (t1 - t2c))
    if not arg > 0:
        raise ArithmeticError(f"log argument {arg} <= 0 in barrier formula")
    return math.log(arg) / (t1 - t2)


def v_unrestricted(params: ModelParams, cbar: float, x):
    """Optimal value without the ratcheting constraint (rates in ``[0, cbar]``).

    Below the barrier ``b*`` nothing is paid and the value is
    ``(e^{theta1 x} - e^{theta2 x}) / (theta1 e^{theta1 b*} - theta2 e^{theta2 b*})``
    with roots at rate 0; above it ``cbar`` is paid.  The two branches meet
    with slope one at ``b*``.
    """
    b = b_star(params, cbar)
    x = np.asarray(x, dtype=float)
    t1, t2, _ = (float(v) for v in _roots(params, 0.0))
    _, t2c, _ = _roots(params, cbar)
    t2c = float(t2c)
    xl = np.minimum(x, b)
    # Scale by e^{-theta1 b} so the lower branch never overflows.
    lower = (np.exp(t1 * (xl - b)) - np.exp(t2 * xl - t1 * b)) / (t1 - t2 * np.exp((t2 - t1) * b))
    upper = cbar / params.q + np.exp(t2c * (np.maximum(x, b) - b)) / t2c
    return _out(np.where(x <= b, lower, upper))


def v_unrestricted_dx(params: ModelParams, cbar: float, x):
    b = b_star(params, cbar)
    x = np.asarray(x, dtype=float)
    t1, t2, _ = (float(v) for v in _roots(params, 0.0))
    _, t2c, _ = _roots(params, cbar)
    t2c = float(t2c)
    xl = np.minimum(x, b)
    lower = (t1 * np.exp(t1 * (xl - b)) - t2 * np.exp(t2 * xl - t1 * b)) / (
        t1 - t2 * np.exp((t2 - t1) * b)
    )
    upper = np.exp(t2c * (np.maximum(x, b) - b))
    return _out(np.where(x <= b, lower, upper))


# --- E1(u) = expm1(u)/u helpers -------------------------------------------------


def _log_e1(u):
    """log(expm1(u)/u), stable for all real u."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    small = au < _SERIES_U
    big = u > 1.0
    safe = np.where(small | big, 1.0, u)
    mid = np.log(np.expm1(safe) / safe)
    ub = np.where(big, u, 2.0)
    large = ub + np.log(-np.expm1(-ub)) - np.log(ub)
    u2 = u * u
    series = u / 2.0 + u2 * (1 / 24.0 - u2 * (1 / 2880.0 - u2 * (1 / 181440.0 - u2 / 9676800.0)))
    return np.where(small, series, np.where(big, large, mid))


def _bern(u):
    """u / expm1(u)."""
    return np.exp(-_log_e1(u))


def _dlog_e1(u):
    """d/du log E1(u) = 1/(1 - e^{-u}) - 1/u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _SERIES_U
    safe = np.where(small, 1.0, u)
    direct = 1.0 / (-np.expm1(-safe)) - 1.0 / safe
    u2 = u * u
    series = 0.5 + u * (1 / 12.0 - u2 * (1 / 720.0 - u2 * (1 / 30240.0 - u2 / 1209600.0)))
    return np.where(small, series, direct)


def _f_decay(u):
    """(1 - e^{-u}) / u."""
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _SERIES_U
    safe = np.where(small, 1.0, u)
    direct = -np.expm1(-safe) / safe
    series = np.zeros_like(u)
    for k in range(9, -1, -1):
        series = 1.0 / math.factorial(k + 1) - u * series
    return np.where(small, series, direct)


_BERN_N = 32
_BERN_SERIES_U = 1.5
# Taylor coefficients of B(u) = sum B_n u^n / n!  (B_1 = -1/2)
_BERN_TAYLOR = bernoulli(_BERN_N) / np.array([math.factorial(n) for n in range(_BERN_N + 1)])


def _bern_taylor(u, deriv):
    """``deriv``-th derivative of B from its Taylor series (|u| < 2 pi)."""
    out = np.zeros_like(u)
    for n in range(_BERN_N, deriv - 1, -1):
        coef = _BERN_TAYLOR[n] * math.factorial(n) / math.factorial(n - deriv)
        out = out * u + coef
    return out


def _bern_d1_shift(u):
    """1 + 2 B'(u); odd in u."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    small = au < _BERN_SERIES_U
    # B_1 term cancels the 1 exactly; the series starts at u/3
    series = 2.0 * (_bern_taylor(u, 1) + 0.5)
    w = np.exp(-np.where(small, 1.0, au))
    direct = np.sign(u) * (1.0 - w * w - 2.0 * au * w) / (1.0 - w) ** 2
    return np.where(small, series, direct)


def _bern_d2(u):
    """B''(u); even in u."""
    u = np.asarray(u, dtype=float)
    au = np.abs(u)
    small = au < _BERN_SERIES_U
    w = np.exp(-np.where(small, 1.0, au))
    direct = w * (au * (1.0 + w) - 2.0 * (1.0 - w)) / (1.0 - w) ** 3
    return np.where(small, _bern_taylor(u, 2), direct)


_GL8 = np.polynomial.legendre.leggauss(8)


def _bern_divdiff(u, v):
    """Divided difference (B(v) - B(u)) / (v - u) of B(w) = w / expm1(w).

    Short intervals use Gauss-Legendre on B' = -L B, which never subtracts
    nearly equal values; B is analytic within 2 pi of the real axis.
    """
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    w = v - u
    short = np.abs(w) <= 1.0
    nodes, weights = _GL8
    shape = (-1,) + (1,) * u.ndim
    pts = 0.5 * (u + v) + 0.5 * w * nodes.reshape(shape)
    quad = 0.5 * np.tensordot(weights, -_dlog_e1(pts) * _bern(pts), axes=1)
    wsafe = np.where(short, 1.0, w)
    direct = (_bern(v) - _bern(u)) / wsafe
    return np.where(short, quad, direct)


def _first_partials(params: ModelParams, x, c):
    """b0, b1, d_x b0, d_x b1 on broadcast arrays of (x, c)."""
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    t1, t2, s = _roots(params, c)
    p1, p2 = _theta_primes(params, c, s)
    delta = t1 - t2
    a = -t2
    ud = delta * x
    ua = a * x
    bd = _bern(ud)
    ld = _dlog_e1(ud)
    # r = E1(a x) / E1(delta x) = e^{-theta1 x} F(a x) / F(delta x); a and delta
    # nearly coincide for small c, so avoid differencing anything in them.
    r = np.exp(-t1 * x) * _f_decay(ua) / _f_decay(ud)
    r_x = -t1 * r * (1.0 + _bern_divdiff(ua, ud))
    q = params.q
    b0 = (t2 * r + c * p2 * bd) / (q * delta)
    b0_x = (t2 * r_x - c * p2 * delta * ld * bd) / (q * delta)
    b1 = -p1 * x + (p2 - p1) / delta * bd
    b1_x = -p1 - (p2 - p1) * ld * bd
    return b0, b1, b0_x, b1_x


def b_funcs(params: ModelParams, c, x):
    """Auxiliary functions ``(b0, b1)`` at ``(x, c)``, continuous through ``x = 0``."""
    b0, b1, _, _ = _first_partials(params, x, c)
    return _out(b0), _out(b1)


def b_limits(params: ModelParams, c):
    """Values of ``b0``, ``b1``, ``d_x b0``, ``d_x b1`` as ``x -> 0+``."""
    t1, t2, s = _roots(params, c)
    p1, p2 = _theta_primes(params, c, s)
    delta = t1 - t2
    b0 = (c * p2 + t2) / (params.q * delta)
    b1 = (p2 - p1) / delta
    b0_x = -(t1 * t2 / delta + c * p2) / (2.0 * params.q)
    b1_x = -(p1 + p2) / 2.0
    return _out(b0), _out(b1), _out(b0_x), _out(b1_x)


def db0_dx(params: ModelParams, c, x):
    return _out(_first_partials(params, x, c)[2])


def db1_dx(params: ModelParams, c, x):
    return _out(_first_partials(params, x, c)[3])


def _richardson(f_plus_minus, h):
    """Fourth-order central difference from (f(+h)-f(-h), f(+h/2)-f(-h/2))."""
    d_h, d_h2 = f_plus_minus
    return (4.0 * d_h2 / h - d_h / (2.0 * h)) / 3.0


def b_partials(params: ModelParams, c, x) -> BDerivatives:
    """All partials of ``b0``/``b1`` needed by the curve ODE.

    First x-partials and the ``b1`` second partials are analytic; the ``b0``
    second partials are Richardson extrapolated central differences of the
    analytic first partials.
    """
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    x, c = np.broadcast_arrays(x, c)
    hx = np.maximum(_FD_MIN, _FD_REL * np.abs(x))
    hc = np.maximum(_FD_MIN, _FD_REL * np.abs(c))
    # One vectorised call on a 9-point stencil: centre, 4 in x, 4 in c.
    offs = np.array([0.0, 1.0, -1.0, 0.5, -0.5]).reshape((-1,) + (1,) * x.ndim)
    xs = np.concatenate([x[None] + offs * hx[None], np.repeat(x[None], 4, axis=0)])
    cs = np.concatenate([np.repeat(c[None], 5, axis=0), c[None] + offs[1:] * hc[None]])
    b0, b1, b0x, b1x = _first_partials(params, xs, cs)
    b1xx, b1xc = _b1_second(params, x, c)

    def second(arr, k0, h):
        return _richardson((arr[k0] - arr[k0 + 1], arr[k0 + 2] - arr[k0 + 3]), h)

    return BDerivatives(
        b0=_out(b0[0]),
        b1=_out(b1[0]),
        db0_dx=_out(b0x[0]),
        db1_dx=_out(b1x[0]),
        d2b0_dxx=_out(second(b0x, 1, hx)),
        d2b1_dxx=_out(b1xx),
        d2b0_dxc=_out(second(b0x, 5, hc)),
        d2b1_dxc=_out(b1xc),
    )


def _b1_second(params: ModelParams, x, c):
    """``d_xx b1`` and ``d_xc b1`` from ``d_x b1 = -theta1' + (theta2' - theta1') B'(delta x)``."""
    t1, t2, s = _roots(params, c)
    p1, p2 = _theta_primes(params, c, s)
    delta = t1 - t2
    u = delta * x
    b2 = _bern_d2(u)
    curv = 2.0 * params.q / s**3  # theta1'' = -theta2''
    d_delta = 2.0 * (c - params.mu) / (s * params.sigma2)
    b1xx = (p2 - p1) * delta * b2
    b1xc = -curv * _bern_d1_shift(u) + (p2 - p1) * b2 * x * d_delta
    return b1xx, b1xc


# --- two-exponential solutions of L^c W = 0 with W(0) = 0 ---------------------------


def exp_gap(params: ModelParams, c, x):
    """``e^{theta1 x} - e^{theta2 x}`` (the homogeneous solution vanishing at 0)."""
    t1, t2, _ = _roots(params, c)
    return _out(np.exp(t1 * x) - np.exp(t2 * np.asarray(x, dtype=float)))


def u_value(params: ModelParams, c, a, x):
    """``c/q (1 - e^{theta2 x}) + a (e^{theta1 x} - e^{theta2 x})``."""
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    t1, t2, _ = _roots(params, c)
    return _out(-(c / params.q) * np.expm1(t2 * x) + a * (np.exp(t1 * x) - np.exp(t2 * x)))


def u_dx(params: ModelParams, c, a, x):
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    t1, t2, _ = _roots(params, c)
    e2 = np.exp(t2 * x)
    return _out(-(c / params.q) * t2 * e2 + a * (t1 * np.exp(t1 * x) - t2 * e2))


def u_dxx(params: ModelParams, c, a, x):
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    t1, t2, _ = _roots(params, c)
    e2 = np.exp(t2 * x)
    return _out(-(c / params.q) * t2 * t2 * e2 + a * (t1 * t1 * np.exp(t1 * x) - t2 * t2 * e2))


def generator_residual(params: ModelParams, c, w, w_x, w_xx):
    """``L^c W = sigma^2/2 W'' + (mu - c) W' - q W + c``."""
    return 0.5 * params.sigma2 * w_xx + (params.mu - c) * w_x - params.q * w + c


def inflection_point(params: ModelParams, c: float, a: float) -> float:
    """Point where ``u_value(c, a, .)`` turns from concave to convex (``a > 0``)."""
    t1, t2, _ = (float(v) for v in _roots(params, c))
    return (math.log((c / params.q + a) * t2 * t2) - math.log(a * t1 * t1)) / (t1 - t2)
