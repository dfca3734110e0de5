"""Free-boundary curve for a continuum of dividend rates.

For a boundary ``zeta`` separating "keep paying c" (``x <= zeta(c)``) from
"raise the rate", the value below the curve is

    H(x, c) = c/q (1 - e^{theta2 x}) + A(c) (e^{theta1 x} - e^{theta2 x}),

with ``A' = b0(zeta, c) + b1(zeta, c) A`` and ``A(cbar) = 0``.  The optimal
curve keeps ``A = -d_x b0 / d_x b1`` along itself; differentiating that
identity gives a first-order ODE for ``zeta`` which is integrated backwards
from ``(cbar, zbar)``, ``zbar`` being the positive root of ``d_x b0(., cbar)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicHermiteSpline

from . import model
from .finite import SolverError, ThresholdPolicy
from .model import ModelParams


@dataclass(frozen=True)
class CurveOptions:
    """``steps=None`` picks ``max(min_steps, per_scale * (cbar - c_low) / scale)`` where
    ``scale = 1 / (theta1'(cbar) zbar)`` is the rate scale on which ``H`` varies at the top."""

    steps: int | None = None
    min_steps: int = 2000
    per_scale: float = 40.0
    method: str = "rk4"
    c_low: float = 0.0
    degeneracy_floor: float = 1e-10
    x_max: float | None = None


@dataclass
class CurvePolicy:
    """Sampled boundary ``zeta`` and coefficient ``A`` on a descending rate grid.

    ``kind`` is ``"smooth"`` for an integrated or sampled continuous curve and
    ``"step"`` for the right-continuous step function of a threshold policy,
    where ``zeta`` equals ``z_i`` on ``[c_i, c_{i+1})``.
    """

    params: ModelParams
    cbar: float
    c_grid: np.ndarray
    zeta: np.ndarray
    A: np.ndarray
    zbar: float
    monotone_flag: bool = True
    degeneracy_flag: bool = False
    kind: str = "smooth"
    zeta_prime: np.ndarray | None = None
    A_ode: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c_grid = np.asarray(self.c_grid, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        if not (self.c_grid.shape == self.zeta.shape == self.A.shape) or self.c_grid.size < 1:
            raise ValueError("c_grid, zeta and A must be equal-length nonempty arrays")
        if self.c_grid.size > 1 and np.any(np.diff(self.c_grid) >= 0):
            raise ValueError("c_grid must be strictly decreasing")
        if self.kind not in ("smooth", "step"):
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.zeta_prime is not None:
            self.zeta_prime = np.asarray(self.zeta_prime, dtype=float)
        if self.A_ode is not None:
            self.A_ode = np.asarray(self.A_ode, dtype=float)
        # ascending copies for interpolation
        self._c = self.c_grid[::-1].copy()
        self._z = self.zeta[::-1].copy()
        self._a = self.A[::-1].copy()
        self._interp = None

    @property
    def c_low(self) -> float:
        return float(self.c_grid[-1])

    @property
    def trivial(self) -> bool:
        return bool(self.meta.get("trivial", False))

    # -- interpolation ------------------------------------------------------------

    def _smooth_interp(self):
        if self._interp is None:
            c, z, a = self._c, self._z, self._a
            if c.size == 1:
                self._interp = (None, None)
                return self._interp
            if self.zeta_prime is not None:
                zp = self.zeta_prime[::-1]
            else:
                zp = np.gradient(z, c)
            zi = CubicHermiteSpline(c, z, zp)
            b0, b1 = model.b_funcs(self.params, c, z)
            ai = CubicHermiteSpline(c, a, b0 + b1 * a)
            self._interp = (zi, ai)
        return self._interp

    def _check_rate(self, c):
        c = np.asarray(c, dtype=float)
        lo, hi = self._c[0], self._c[-1]
        span = max(1.0, abs(hi))
        if np.any(c < lo - 1e-12 * span) or np.any(c > hi + 1e-12 * span):
            raise ValueError(f"rate outside [{lo}, {hi}]")
        return np.clip(c, lo, hi)

    def zeta_at(self, c):
        c = self._check_rate(c)
        if self._c.size == 1:
            return model._out(np.full(c.shape, self._z[0]))
        if self.kind == "step":
            k = np.searchsorted(self._c, c, side="right") - 1
            return model._out(self._z[np.clip(k, 0, self._c.size - 1)])
        return model._out(self._smooth_interp()[0](c))

    def A_at(self, c):
        c = self._check_rate(c)
        if self._c.size == 1:
            return model._out(np.full(c.shape, self._a[0]))
        if self.kind == "step":
            return model._out(self._step_A(c).reshape(c.shape))
        return model._out(self._smooth_interp()[1](c))

    def _step_A(self, c):
        """``A`` between nodes of a step curve, from ``d_c H(z_i, c) = 0``."""
        c = np.atleast_1d(c)
        nodes, z, a = self._c, self._z, self._a
        k = np.clip(np.searchsorted(nodes, c, side="right") - 1, 0, nodes.size - 1)
        out = np.empty(c.shape)
        for j, (cj, kj) in enumerate(zip(c, k)):
            if cj == nodes[kj] or kj == nodes.size - 1:
                out[j] = a[kj]
                continue
            zi, c_next, a_next = z[kj], nodes[kj + 1], a[kj + 1]
            out[j] = _hold_coefficient(self.params, zi, cj, c_next, a_next)
        return out


def _hold_coefficient(params, x0, c, c_next, a_next):
    """``A(c)`` keeping ``H(x0, .)`` constant on ``[c, c_next]`` (boundary fixed at x0)."""
    if x0 > 0:
        h = model.u_value(params, c_next, a_next, x0)
        return (h - model.v_constant(params, c, x0)) / model.exp_gap(params, c, x0)
    t1, t2 = (float(v) for v in model._roots(params, c)[:2])
    slope = model.u_dx(params, c_next, a_next, 0.0)
    return (slope + c * t2 / params.q) / (t1 - t2)


@dataclass
class VerificationReport:
    tol: float
    max_dx_minus_one: float
    worst_dx_rate: float
    max_dc: float
    worst_dc_point: tuple
    max_dc_on_curve: float
    max_dcx: float
    worst_dcx_rate: float
    max_dcc: float
    worst_dcc_rate: float
    pass_dx: bool
    pass_dc: bool
    pass_smooth_pasting: bool

    @property
    def passed(self) -> bool:
        return self.pass_dx and self.pass_dc and self.pass_smooth_pasting

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["worst_dc_point"] = list(self.worst_dc_point)
        out["passed"] = self.passed
        return out


# --- the top point -------------------------------------------------------------


def find_zbar(params: ModelParams, cbar: float, x_max: float | None = None, n_scan: int = 4000) -> float:
    """Unique positive root of ``d_x b0(., cbar)`` (sign goes from - to +)."""
    if cbar <= model.trivial_threshold(params):
        raise ValueError(
            f"cbar={cbar} is in the trivial regime (<= {model.trivial_threshold(params)})"
        )
    x_max = x_max or 10.0 * (model.b_star(params, cbar) + params.sigma2 / params.mu)
    for _ in range(6):
        xs = np.linspace(0.0, x_max, n_scan)
        g = model.db0_dx(params, cbar, xs)
        pos = np.nonzero(g > 0)[0]
        if pos.size:
            k = int(pos[0])
            if k == 0:
                raise SolverError("d_x b0 is not negative at 0 although cbar is nontrivial")
            root = optimize.brentq(
                lambda x: float(model.db0_dx(params, cbar, x)), xs[k - 1], xs[k],
                xtol=1e-14, rtol=1e-15,
            )
            if not model.b_partials(params, cbar, root).d2b0_dxx > 0:
                raise SolverError(f"d_xx b0 not positive at the root {root}")
            return float(root)
        x_max *= 2.0
    raise SolverError(f"no sign change of d_x b0(., {cbar}) found up to x = {x_max}")


# --- the curve ODE ----------------------------------------------------------------


def _rhs(params, c, zeta, a, floor):
    d = model.b_partials(params, c, zeta)
    num = (-d.b0 * d.db1_dx**2 + d.b1 * d.db0_dx * d.db1_dx
           - d.d2b0_dxc * d.db1_dx + d.d2b1_dxc * d.db0_dx)
    den = d.d2b0_dxx * d.db1_dx - d.d2b1_dxx * d.db0_dx
    scale = abs(d.d2b0_dxx * d.db1_dx) + abs(d.d2b1_dxx * d.db0_dx)
    degenerate = not abs(den) > floor * scale
    zp = num / den if not degenerate else math.nan
    return zp, d.b0 + d.b1 * a, degenerate


def auto_steps(params: ModelParams, c_low: float, cbar: float, zbar: float, opts: CurveOptions) -> int:
    p1 = float(model.theta_derivatives(params, cbar)[0])
    return max(opts.min_steps, int(math.ceil(opts.per_scale * (cbar - c_low) * p1 * zbar)))


def integrate_curve(params: ModelParams, c_low: float, cbar: float, opts: CurveOptions | None = None) -> CurvePolicy:
    """Integrate ``(zeta, A)`` from ``(cbar, zbar, 0)`` down to ``c_low`` on a fixed grid."""
    opts = opts or CurveOptions()
    if c_low < 0 or c_low >= cbar:
        raise ValueError("need 0 <= c_low < cbar")
    if opts.method not in ("rk4", "euler"):
        raise ValueError(f"unknown stepper {opts.method!r}")
    zbar = find_zbar(params, cbar, opts.x_max)
    steps = opts.steps or auto_steps(params, c_low, cbar, zbar, opts)
    cs = np.linspace(cbar, c_low, steps + 1)
    h = cs[1] - cs[0]
    floor = opts.degeneracy_floor
    zeta = np.full(cs.size, np.nan)
    a_ode = np.full(cs.size, np.nan)
    zprime = np.full(cs.size, np.nan)
    zeta[0], a_ode[0] = zbar, 0.0
    degenerate = False
    last = 0
    for k in range(steps):
        c, z, a = cs[k], zeta[k], a_ode[k]
        k1z, k1a, bad = _rhs(params, c, z, a, floor)
        zprime[k] = k1z
        if bad:
            degenerate = True
            break
        if opts.method == "euler":
            zn, an = z + h * k1z, a + h * k1a
        else:
            k2z, k2a, b2 = _rhs(params, c + h / 2, z + h / 2 * k1z, a + h / 2 * k1a, floor)
            k3z, k3a, b3 = _rhs(params, c + h / 2, z + h / 2 * k2z, a + h / 2 * k2a, floor)
            k4z, k4a, b4 = _rhs(params, c + h, z + h * k3z, a + h * k3a, floor)
            if b2 or b3 or b4:
                degenerate = True
                break
            zn = z + h / 6 * (k1z + 2 * k2z + 2 * k3z + k4z)
            an = a + h / 6 * (k1a + 2 * k2a + 2 * k3a + k4a)
        if not (math.isfinite(zn) and math.isfinite(an)) or zn < 0:
            raise SolverError(f"curve integration left the domain at c={cs[k + 1]} (zeta={zn})")
        zeta[k + 1], a_ode[k + 1] = zn, an
        last = k + 1
    if not degenerate:
        zprime[last] = _rhs(params, cs[last], zeta[last], a_ode[last], floor)[0]
    n = last + 1
    cs, zeta, a_ode, zprime = cs[:n], zeta[:n], a_ode[:n], zprime[:n]
    d = model.b_partials(params, cs, zeta)
    a_id = -d.db0_dx / d.db1_dx
    a_id[0] = 0.0  # d_x b0(zbar, cbar) = 0 up to root-finding error
    monotone = bool(np.all(np.diff(zeta) <= 0))  # descending c: zeta non-increasing
    if degenerate:
        zprime[-1] = np.nan
        zp_out = np.where(np.isfinite(zprime), zprime, np.gradient(zeta, cs) if n > 1 else 0.0)
    else:
        zp_out = zprime
    return CurvePolicy(
        params, float(cbar), cs, zeta, a_id, float(zbar), monotone_flag=monotone,
        degeneracy_flag=degenerate, kind="smooth", zeta_prime=zp_out, A_ode=a_ode,
        meta={"method": opts.method, "steps": steps, "reached_c": float(cs[-1])},
    )


def trivial_curve(params: ModelParams, cbar: float, c_low: float = 0.0, n: int = 2) -> CurvePolicy:
    """Curve of the regime where jumping straight to ``cbar`` is optimal."""
    cs = np.linspace(cbar, c_low, n) if cbar > c_low else np.array([cbar])
    zero = np.zeros(cs.size)
    return CurvePolicy(
        params, float(cbar), cs, zero, zero.copy(), 0.0, kind="smooth",
        zeta_prime=zero.copy(), A_ode=zero.copy(), meta={"trivial": True},
    )


def curve_from_threshold(policy: ThresholdPolicy) -> CurvePolicy:
    """Right-continuous step boundary ``zeta = z_i`` on ``[c_i, c_{i+1})``."""
    rates = policy.rates
    n = rates.size
    A = np.zeros(n)
    for i in range(n - 2, -1, -1):
        A[i] = _hold_coefficient(policy.params, policy.z[i], rates[i], rates[i + 1], A[i + 1])
    zeta = np.append(policy.z, policy.z[-1] if n > 1 else 0.0)
    return CurvePolicy(
        policy.params, float(rates[-1]), rates[::-1].copy(), zeta[::-1].copy(), A[::-1].copy(),
        float(zeta[-1]), monotone_flag=bool(np.all(np.diff(policy.z) >= 0)), kind="step",
        meta={"source": "threshold"},
    )


def curve_from_samples(params: ModelParams, c_grid, zeta, zeta_prime=None) -> CurvePolicy:
    """Smooth policy for an arbitrary sampled boundary; ``A`` from its ODE."""
    c_grid = np.asarray(c_grid, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    order = np.argsort(c_grid)
    c_up, z_up = c_grid[order], zeta[order]
    if zeta_prime is None:
        zp_up = np.gradient(z_up, c_up)
    else:
        zp_up = np.asarray(zeta_prime, dtype=float)[order]
    zf = CubicHermiteSpline(c_up, z_up, zp_up)

    def rhs(c, a):
        b0, b1 = model.b_funcs(params, c, zf(c))
        return b0 + b1 * a

    sol = integrate.solve_ivp(
        rhs, (c_up[-1], c_up[0]), [0.0], t_eval=c_up[::-1], rtol=1e-12, atol=1e-12, method="DOP853",
    )
    if not sol.success:
        raise SolverError(f"coefficient ODE failed: {sol.message}")
    A_desc = sol.y[0]
    return CurvePolicy(
        params, float(c_up[-1]), c_up[::-1].copy(), z_up[::-1].copy(), A_desc,
        float(z_up[-1]), monotone_flag=bool(np.all(np.diff(z_up) >= 0)), kind="smooth",
        zeta_prime=zp_up[::-1].copy(), A_ode=A_desc.copy(), meta={"source": "samples"},
    )


# --- evaluation ------------------------------------------------------------------


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


def _curve_b(policy: CurvePolicy, t):
    return model.b_funcs(policy.params, t, policy.zeta_at(t))


def a_of_curve(policy: CurvePolicy, c: float):
    """``A(c)`` by quadrature of its integral representation, and the stored value.

    ``A(c) = -int_c^cbar exp(-int_c^t b1(zeta(s), s) ds) b0(zeta(t), t) dt``,
    with Gauss-Legendre panels between the curve nodes.
    """
    c = float(policy._check_rate(c))
    stored = float(policy.A_at(c))
    cbar = policy.cbar
    if c >= cbar:
        return 0.0, stored
    knots = policy._c[policy._c > c]
    edges = np.concatenate([[c], knots])
    if policy.kind == "step":
        # keep panels inside the intervals where zeta is constant
        edges = np.unique(edges)
    total = 0.0
    inner = 0.0  # int_c^{left edge} b1
    for lo, hi in zip(edges[:-1], edges[1:]):
        half, mid = 0.5 * (hi - lo), 0.5 * (hi + lo)
        ts = mid + half * _GL_X
        # inner integral from lo to each node ts, again by Gauss-Legendre
        sub_half = 0.5 * (ts - lo)
        ss = (lo + sub_half)[:, None] + sub_half[:, None] * _GL_X[None, :]
        if policy.kind == "step":
            # zeta is the left node's value on the whole panel
            zc = float(policy.zeta_at(lo))
            b0 = model.b_funcs(policy.params, ts, zc)[0]
            b1_in = model.b_funcs(policy.params, ss, zc)[1]
            b1_full = model.b_funcs(policy.params, mid + half * _GL_X, zc)[1]
        else:
            b0 = _curve_b(policy, ts)[0]
            b1_in = _curve_b(policy, ss.ravel())[1].reshape(ss.shape)
            b1_full = _curve_b(policy, ts)[1]
        inner_ts = inner + sub_half * (b1_in @ _GL_W)
        total += half * np.sum(_GL_W * np.exp(-inner_ts) * b0)
        inner += half * np.sum(_GL_W * b1_full)
    return -float(total), stored


def h_eval(policy: CurvePolicy, x, c):
    """``H(x, c)`` on the closure of the no-change region ``x <= zeta(c)``."""
    x = np.asarray(x, dtype=float)
    z = np.asarray(policy.zeta_at(c))
    if policy.kind == "smooth" and np.any(x > z + 1e-9 * np.maximum(1.0, z)):
        raise ValueError("x above the curve; use w_eval")
    return model.u_value(policy.params, c, policy.A_at(c), x)


def _first_crossing(policy: CurvePolicy, x: float, c: float) -> float:
    """First rate ``d >= c`` where ``zeta(d) > x`` (``cbar`` if none)."""
    nodes, z = policy._c, policy._z
    if policy.kind == "step":
        k = int(np.searchsorted(nodes, c, side="right")) - 1
        for j in range(k + 1, nodes.size - 1):
            if z[j] > x:
                return float(nodes[j])
        return policy.cbar
    k = int(np.searchsorted(nodes, c, side="right"))
    prev_c, prev_z = c, float(policy.zeta_at(c))
    for j in range(k, nodes.size):
        if z[j] > x:
            if prev_z >= x:
                return float(prev_c)
            # linear crossing, then Newton on the interpolant
            d = prev_c + (x - prev_z) * (nodes[j] - prev_c) / (z[j] - prev_z)
            return _invert_polish(policy, x, d, prev_c, nodes[j])
        prev_c, prev_z = nodes[j], z[j]
    return policy.cbar


def _invert_polish(policy, x, d, lo, hi):
    zi = policy._smooth_interp()[0]
    if zi is None:
        return d
    for _ in range(4):
        slope = float(zi(d, 1))
        if slope <= 0:
            break
        d = min(max(d - (float(zi(d)) - x) / slope, lo), hi)
    return float(d)


def continuation_rate(policy: CurvePolicy, x, c):
    """Rate ``C(x, c)`` the policy jumps to from ``x >= zeta(c)``."""
    x = np.asarray(x, dtype=float)
    c = float(policy._check_rate(c))
    z_c = float(policy.zeta_at(c))
    if np.any(x < z_c - 1e-9 * max(1.0, z_c)):
        raise ValueError("continuation rate needs x >= zeta(c)")
    flat = np.atleast_1d(x)
    out = np.empty(flat.shape)
    nodes, z = policy._c, policy._z
    for i, xi in enumerate(flat):
        if c >= policy.cbar:
            out[i] = policy.cbar
        elif policy.kind == "smooth" and policy.monotone_flag and not policy.trivial:
            if xi >= z[-1]:
                out[i] = policy.cbar
            else:
                d = float(np.interp(xi, z, nodes))
                j = int(np.clip(np.searchsorted(nodes, d), 1, nodes.size - 1))
                out[i] = max(c, _invert_polish(policy, xi, d, nodes[j - 1], nodes[j]))
        else:
            out[i] = _first_crossing(policy, xi, c)
    return model._out(out.reshape(x.shape))


def w_eval(policy: CurvePolicy, x, c):
    """``W(x, c)``: ``H`` below the curve, ``H`` at the continuation rate above it."""
    x = np.asarray(x, dtype=float)
    c = float(policy._check_rate(c))
    if c >= policy.cbar or policy.trivial:
        return model.v_constant(policy.params, policy.cbar, x)
    z_c = float(policy.zeta_at(c))
    flat = np.atleast_1d(x)
    out = np.empty(flat.shape)
    below = flat < z_c if policy.kind == "step" else flat <= z_c
    if np.any(below):
        out[below] = model.u_value(policy.params, c, float(policy.A_at(c)), flat[below])
    above = ~below
    if np.any(above):
        rates = np.atleast_1d(continuation_rate(policy, flat[above], c))
        out[above] = model.u_value(policy.params, rates, policy.A_at(rates), flat[above])
    return model._out(out.reshape(x.shape))


# --- verification ----------------------------------------------------------------


def _fd_first(values, h):
    """Fourth-order first derivative on a uniform grid (5-point stencils)."""
    v = np.asarray(values, dtype=float)
    n = v.size
    d = np.empty(n)
    if n < 5:
        return np.gradient(v, h)
    d[2:-2] = (v[:-4] - 8 * v[1:-3] + 8 * v[3:-1] - v[4:]) / (12 * h)
    d[0] = (-25 * v[0] + 48 * v[1] - 36 * v[2] + 16 * v[3] - 3 * v[4]) / (12 * h)
    d[1] = (-3 * v[0] - 10 * v[1] + 18 * v[2] - 6 * v[3] + v[4]) / (12 * h)
    d[-1] = (25 * v[-1] - 48 * v[-2] + 36 * v[-3] - 16 * v[-4] + 3 * v[-5]) / (12 * h)
    d[-2] = (3 * v[-1] + 10 * v[-2] - 18 * v[-3] + 6 * v[-4] - v[-5]) / (12 * h)
    return d


def _dc_h(params, x, c, a, a_prime):
    """``d_c H = D (-b0 - b1 A + A')`` with ``D = e^{theta1 x} - e^{theta2 x}``."""
    b0, b1 = model.b_funcs(params, c, x)
    return model.exp_gap(params, c, x) * (-b0 - b1 * a + a_prime)


def verify(policy: CurvePolicy, tol: float = 1e-4, n_x: int = 400) -> VerificationReport:
    """Check the sufficient conditions of optimality for a curve policy.

    (a) ``d_x W(zeta(c), c) <= 1``; (b) ``d_c W <= 0`` on the no-change region;
    (c) smooth pasting ``d_cx W = d_cc W = 0`` along the curve.  Violations are
    reported, never raised.
    """
    p = policy.params
    if policy.trivial or policy.c_grid.size < 5:
        return VerificationReport(tol, -math.inf, policy.cbar, 0.0, (0.0, policy.cbar), 0.0,
                                  0.0, policy.cbar, 0.0, policy.cbar, True, True, True)
    cs, z, a = policy._c, policy._z, policy._a
    h = float(np.mean(np.diff(cs)))
    a_prime = _fd_first(a, h)

    dx = model.u_dx(p, cs, a, z) - 1.0
    k_dx = int(np.argmax(dx))

    x_top = 1.5 * float(np.max(z)) + 5.0 * p.sigma2 / p.mu
    xs = np.linspace(0.0, x_top, n_x)
    X, C = np.meshgrid(xs, cs, indexing="ij")
    dc = _dc_h(p, X, C, a[None, :], a_prime[None, :])
    dc = np.where(X <= z[None, :], dc, -np.inf)
    flat = int(np.argmax(dc))
    ix, ic = np.unravel_index(flat, dc.shape)
    dc_curve = np.abs(_dc_h(p, z, cs, a, a_prime))

    bpart = model.b_partials(p, cs, z)
    gap = model.exp_gap(p, cs, z)
    t1, t2 = (np.asarray(v) for v in model._roots(p, cs)[:2])
    dgap = t1 * np.exp(t1 * z) - t2 * np.exp(t2 * z)
    bracket = -bpart.b0 - bpart.b1 * a + a_prime
    dcx = np.abs(dgap * bracket + gap * (-bpart.db0_dx - bpart.db1_dx * a))
    k_dcx = int(np.argmax(dcx))

    # d_cc H at (zeta_k, c_k): fourth-order centred differences in c at fixed x = zeta_k
    zk = z[2:-2]
    f = [_dc_h(p, zk, cs[2 + j:cs.size - 2 + j], a[2 + j:a.size - 2 + j],
               a_prime[2 + j:a.size - 2 + j]) for j in (-2, -1, 1, 2)]
    dcc = np.abs((f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * h))
    k_dcc = int(np.argmax(dcc))

    return VerificationReport(
        tol=tol,
        max_dx_minus_one=float(dx[k_dx]),
        worst_dx_rate=float(cs[k_dx]),
        max_dc=float(dc[ix, ic]),
        worst_dc_point=(float(xs[ix]), float(cs[ic])),
        max_dc_on_curve=float(np.max(dc_curve)),
        max_dcx=float(dcx[k_dcx]),
        worst_dcx_rate=float(cs[k_dcx]),
        max_dcc=float(dcc[k_dcc]),
        worst_dcc_rate=float(cs[2:-2][k_dcc]),
        pass_dx=bool(dx[k_dx] <= tol),
        pass_dc=bool(dc[ix, ic] <= tol),
        pass_smooth_pasting=bool(dcx[k_dcx] <= tol and dcc[k_dcc] <= tol),
    )


def solve_continuum(params: ModelParams, cbar: float, opts: CurveOptions | None = None,
                    tol: float = 1e-4) -> tuple[CurvePolicy, VerificationReport]:
    """``find_zbar`` then ``integrate_curve`` then ``verify``; trivial regime short-circuits."""
    opts = opts or CurveOptions()
    if cbar <= 0:
        raise ValueError("cbar must be positive")
    if cbar <= model.trivial_threshold(params):
        pol = trivial_curve(params, cbar, min(opts.c_low, cbar))
        return pol, verify(pol, tol)
    pol = integrate_curve(params, opts.c_low, cbar, opts)
    return pol, verify(pol, tol)
