"""Optimal ratcheting over a finite set of dividend rates.

The value at the top rate is the constant-rate closed form.  Going down the
grid, each level pays ``c_i`` until the surplus first hits a threshold
``z_i`` and then hands over to level ``i+1``; below the threshold the value
is the two-exponential solution ``U_a`` with ``a`` chosen so the pieces meet.
The optimal threshold maximises the coefficient ratio

    R(y) = (W(y, c_{i+1}) - c_i/q (1 - e^{theta2 y})) / (e^{theta1 y} - e^{theta2 y}),

and the same thresholds come out of an obstacle formulation (smallest ``U_a``
lying above the next level), which is kept as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from . import model
from .model import ModelParams


class SolverError(RuntimeError):
    """A numerical routine failed to bracket or converge."""


@dataclass(frozen=True)
class RateGrid:
    """Strictly increasing admissible rates; the last one is the cap ``cbar``."""

    rates: tuple

    def __init__(self, rates):
        arr = tuple(float(r) for r in rates)
        if len(arr) < 1:
            raise ValueError("rate grid must contain at least one rate")
        if any(not math.isfinite(r) or r < 0 for r in arr):
            raise ValueError("rates must be finite and nonnegative")
        if any(b <= a for a, b in zip(arr, arr[1:])):
            raise ValueError("rates must be strictly increasing")
        object.__setattr__(self, "rates", arr)

    @property
    def cbar(self) -> float:
        return self.rates[-1]

    @property
    def n(self) -> int:
        return len(self.rates)

    @property
    def mesh(self) -> float:
        r = np.asarray(self.rates)
        return float(np.max(np.diff(r))) if r.size > 1 else 0.0

    @classmethod
    def dyadic(cls, cbar: float, level: int, c_low: float = 0.0) -> "RateGrid":
        """``2**level + 1`` equally spaced rates on ``[c_low, cbar]``."""
        return cls(np.linspace(c_low, cbar, 2**level + 1))


@dataclass(frozen=True)
class SolverOptions:
    n_scan: int = 2000
    x_max: float | None = None
    xtol_rel: float = 1e-10


@dataclass
class ThresholdPolicy:
    """Thresholds ``z`` and coefficients ``a`` for every rate but the last.

    ``W(x, c_i) = c_i/q (1 - e^{theta2 x}) + a_i (e^{theta1 x} - e^{theta2 x})`` for
    ``x < z_i`` and ``W(x, c_{i+1})`` otherwise.
    """

    params: ModelParams
    grid: RateGrid
    z: np.ndarray
    a: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        if self.z.shape != (self.grid.n - 1,) or self.a.shape != (self.grid.n - 1,):
            raise ValueError("z and a need one entry per rate below cbar")

    @property
    def rates(self) -> np.ndarray:
        return np.asarray(self.grid.rates)

    def value(self, x, i: int):
        return wz_eval(self, x, i)


def _check_index(policy: ThresholdPolicy, i: int) -> int:
    n = policy.grid.n
    if not (isinstance(i, (int, np.integer)) and 0 <= i < n):
        raise IndexError(f"rate index {i} out of range for {n} rates")
    return int(i)


def _level_eval(params, rates, z, a, x, i, deriv=0):
    """Value (or x-derivative) of level ``i`` of a threshold recursion."""
    x = np.asarray(x, dtype=float)
    n = len(rates)
    fun = (model.u_value, model.u_dx, model.u_dxx)[deriv]
    out = np.empty_like(x)
    todo = np.ones(x.shape, dtype=bool)
    for j in range(i, n - 1):
        hit = todo & (x < z[j])
        if np.any(hit):
            out[hit] = fun(params, rates[j], a[j], x[hit])
            todo &= ~hit
        if not np.any(todo):
            break
    if np.any(todo):
        out[todo] = fun(params, rates[n - 1], 0.0, x[todo])
    return out


def wz_eval(policy: ThresholdPolicy, x, i: int):
    """``W^z(x, c_i)`` for a threshold policy (0-based rate index)."""
    i = _check_index(policy, i)
    x = np.asarray(x, dtype=float)
    return model._out(_level_eval(policy.params, policy.grid.rates, policy.z, policy.a, x, i))


def wz_dx(policy: ThresholdPolicy, x, i: int):
    """``d/dx W^z(x, c_i)``; right derivative at the thresholds."""
    i = _check_index(policy, i)
    x = np.asarray(x, dtype=float)
    return model._out(
        _level_eval(policy.params, policy.grid.rates, policy.z, policy.a, x, i, deriv=1)
    )


def default_x_max(params: ModelParams, cbar: float) -> float:
    return 5.0 * (model.b_star(params, cbar) + params.sigma2 / params.mu)


# --- the coefficient ratio and its derivative ---------------------------------------


class _Level:
    """Ratio ``R(y)`` for level ``i`` against the already-solved level ``i+1``."""

    def __init__(self, params, rates, z, a, i):
        self.p = params
        self.rates, self.z, self.a, self.i = rates, z, a, i
        self.c = rates[i]
        t1, t2, _ = model._roots(params, self.c)
        self.t1, self.t2 = float(t1), float(t2)
        self.delta = self.t1 - self.t2

    def upper(self, y, deriv=0):
        return _level_eval(self.p, self.rates, self.z, self.a, y, self.i + 1, deriv)

    def _inv_gap(self, y):
        # 1 / (e^{theta1 y} - e^{theta2 y}) without overflow
        return np.exp(-self.t1 * y) / (-np.expm1(-self.delta * y))

    def ratio_at_zero(self) -> float:
        w1 = float(self.upper(np.array([0.0]), 1)[0])
        return (w1 + self.c * self.t2 / self.p.q) / self.delta

    def ratio(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        out = np.empty_like(y)
        zero = y <= 0
        if np.any(zero):
            out[zero] = self.ratio_at_zero()
        pos = ~zero
        if np.any(pos):
            yp = y[pos]
            num = self.upper(yp) + (self.c / self.p.q) * np.expm1(self.t2 * yp)
            out[pos] = num * self._inv_gap(yp)
        return out

    def ratio_slope(self, y):
        """``R'(y)``, written as ``(N' - R D') / D`` with ``D'/D`` in stable form."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        r = self.ratio(y)
        n1 = self.upper(y, 1) + (self.c / self.p.q) * self.t2 * np.exp(self.t2 * y)
        dlog = self.t1 + self.delta / np.expm1(self.delta * y)
        return n1 * self._inv_gap(y) - r * dlog

    def foc(self, y):
        """Unscaled first-order residual ``N'D - N D'`` at ``y``."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        e1, e2 = np.exp(self.t1 * y), np.exp(self.t2 * y)
        gap, dgap = e1 - e2, self.t1 * e1 - self.t2 * e2
        cq = self.c / self.p.q
        w, w1 = self.upper(y), self.upper(y, 1)
        return cq * self.t2 * e2 * gap + cq * (1.0 - e2) * dgap + w1 * gap - w * dgap


def _maximize_ratio(level: _Level, x_max: float, n_scan: int, xtol_rel: float):
    """Smallest global maximiser of ``R`` on ``[0, inf)`` and the maximum."""
    for attempt in range(2):
        ys = np.linspace(0.0, x_max, n_scan)
        vals = level.ratio(ys)
        k = int(np.argmax(vals))  # first index among ties
        if k < n_scan - 1:
            break
        if attempt == 0:
            x_max *= 2.0
    else:
        raise SolverError(
            f"ratio maximum for rate {level.c} sits at the scan end {x_max}; "
            "increase x_max"
        )
    xtol = xtol_rel * x_max
    r0 = float(vals[0])
    if k == 0:
        res = optimize.minimize_scalar(
            lambda y: -level.ratio(y)[0], bounds=(0.0, ys[1]), method="bounded",
            options={"xatol": xtol},
        )
        if -res.fun > r0 + 1e-14 * max(1.0, abs(r0)) and res.x > xtol:
            y = _polish(level, 0.5 * res.x, ys[1], res.x)
            return y, float(level.ratio(y)[0])
        return 0.0, r0
    lo, hi = ys[k - 1], ys[k + 1]
    res = optimize.minimize_scalar(
        lambda y: -level.ratio(y)[0], bracket=(lo, ys[k], hi), method="golden",
        options={"xtol": 1e-12},
    )
    y = float(res.x) if lo <= res.x <= hi else float(ys[k])
    y = _polish(level, lo, hi, y)
    return y, float(level.ratio(y)[0])


def _polish(level: _Level, lo: float, hi: float, guess: float) -> float:
    """Refine a maximiser by a root of ``R'`` when the bracket changes sign."""
    glo, ghi = level.ratio_slope(lo)[0], level.ratio_slope(hi)[0]
    if lo > 0 and glo > 0 > ghi:
        return float(optimize.brentq(lambda y: level.ratio_slope(y)[0], lo, hi, xtol=1e-14, rtol=1e-15))
    return guess


def _trivial_policy(params, grid, **meta) -> ThresholdPolicy:
    n = grid.n
    return ThresholdPolicy(params, grid, np.zeros(n - 1), np.zeros(n - 1), meta=dict(meta, trivial=True))


def solve_thresholds(params: ModelParams, grid: RateGrid, opts: SolverOptions | None = None) -> ThresholdPolicy:
    """Backward recursion for the optimal thresholds on ``grid``."""
    opts = opts or SolverOptions()
    n = grid.n
    rates = grid.rates
    if grid.cbar <= model.trivial_threshold(params) or n == 1:
        return _trivial_policy(params, grid, method="argmax")
    x_max = opts.x_max or default_x_max(params, grid.cbar)
    z = np.zeros(n - 1)
    a = np.zeros(n - 1)
    for i in range(n - 2, -1, -1):
        level = _Level(params, rates, z, a, i)
        z[i], a[i] = _maximize_ratio(level, x_max, opts.n_scan, opts.xtol_rel)
    return ThresholdPolicy(params, grid, z, a, meta={"method": "argmax", "x_max": x_max})


def foc_residual(policy: ThresholdPolicy, i: int, y: float | None = None):
    """First-order residual of the ratio maximisation at ``z_i`` (or at ``y``).

    Returns ``None`` when the threshold sits on the boundary ``z_i = 0``, where
    no interior condition applies.
    """
    i = _check_index(policy, i)
    if i == policy.grid.n - 1:
        raise IndexError("the top rate has no threshold")
    if y is None:
        if policy.z[i] <= 0:
            return None
        y = policy.z[i]
    level = _Level(policy.params, policy.grid.rates, policy.z, policy.a, i)
    return float(level.foc(float(y))[0])


# --- obstacle formulation ---------------------------------------------------------


def _gap_over_x(params, c, a, upper, xs):
    """``(U_a - W_{i+1}) / x`` on positive ``xs``."""
    return (model.u_value(params, c, a, xs) - upper(xs)) / xs


def _min_gap(params, c, a, upper, xs):
    vals = _gap_over_x(params, c, a, upper, xs)
    k = int(np.argmin(vals))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)]
    res = optimize.minimize_scalar(
        lambda x: _gap_over_x(params, c, a, upper, np.array([x]))[0],
        bounds=(lo, hi), method="bounded", options={"xatol": 1e-13},
    )
    best = min(float(vals[k]), float(res.fun))
    xbest = float(res.x) if res.fun < vals[k] else float(xs[k])
    return best, xbest


def _obstacle_level(params, rates, z, a, i, x_max, n_lattice):
    c = rates[i]

    def upper(x):
        return _level_eval(params, rates, z, a, np.asarray(x, dtype=float), i + 1)

    # U_0 tends to c_i/q < cbar/q, so the obstacle pokes above it somewhere;
    # make sure the lattice reaches that region.
    reach = x_max
    while float(upper(reach)) <= model.v_constant(params, c, reach):
        reach *= 2.0
        if reach > 1e6 * x_max:
            raise SolverError(f"obstacle never exceeds the constant-rate value at rate {c}")
    xs = np.linspace(2.0 * reach / n_lattice, 2.0 * reach, n_lattice)
    a_lo, a_hi = 0.0, 1.0
    if _min_gap(params, c, 0.0, upper, xs)[0] >= 0:
        return 0.0, 0.0
    while _min_gap(params, c, a_hi, upper, xs)[0] < 0:
        a_lo, a_hi = a_hi, 2.0 * a_hi
        if a_hi > 1e12:
            raise SolverError(f"no supersolution found for rate {c}")
    for _ in range(200):
        mid = 0.5 * (a_lo + a_hi)
        if mid <= a_lo or mid >= a_hi:
            break
        if _min_gap(params, c, mid, upper, xs)[0] >= 0:
            a_hi = mid
        else:
            a_lo = mid
        if a_hi - a_lo <= 1e-15 * a_hi:
            break
    # The infeasible candidate dips below the obstacle on a tiny interval
    # around the contact point; its two crossings bracket z*.
    _, xmin = _min_gap(params, c, a_lo, upper, xs)

    def diff(x):
        return model.u_value(params, c, a_lo, x) - upper(np.array([x]))[0]

    if diff(xmin) >= 0:
        return a_hi, xmin
    step = max(1e-9, 1e-6 * xmin)
    left = xmin
    while left > 0 and diff(left) < 0:
        left = max(0.0, left - step)
        step *= 2.0
    right, step = xmin, max(1e-9, 1e-6 * xmin)
    while diff(right) < 0:
        right += step
        step *= 2.0
    x_left = optimize.brentq(diff, left, xmin, xtol=1e-15) if left > 0 else 0.0
    x_right = optimize.brentq(diff, xmin, right, xtol=1e-15)
    return a_hi, 0.5 * (x_left + x_right)


def obstacle_cross_check(
    params: ModelParams, grid: RateGrid, opts: SolverOptions | None = None, n_lattice: int = 4000
) -> ThresholdPolicy:
    """Thresholds from the smallest supersolution above the next level.

    Bisects on the coefficient ``a`` with feasibility judged by the minimum of
    ``(U_a - W_{i+1})/x`` over a lattice plus a local refinement.  Independent of
    the ratio maximisation in :func:`solve_thresholds`.
    """
    opts = opts or SolverOptions()
    n = grid.n
    if grid.cbar <= model.trivial_threshold(params) or n == 1:
        return _trivial_policy(params, grid, method="obstacle")
    x_max = opts.x_max or default_x_max(params, grid.cbar)
    rates = grid.rates
    z = np.zeros(n - 1)
    a = np.zeros(n - 1)
    for i in range(n - 2, -1, -1):
        a[i], z[i] = _obstacle_level(params, rates, z, a, i, x_max, n_lattice)
    return ThresholdPolicy(params, grid, z, a, meta={"method": "obstacle", "x_max": x_max})


# --- off-grid rates and the convergence experiment ----------------------------------


def extend_value(policy: ThresholdPolicy, x, c: float, mode: str = "round_up"):
    """Value at an off-grid rate ``c``.

    ``round_up`` evaluates the level of the smallest grid rate ``>= c``.
    ``extended`` pays ``c`` until the surplus reaches ``z_i`` of the grid rate just
    below and then follows level ``i+1``.
    """
    rates = policy.rates
    if not (rates[0] <= c <= rates[-1]):
        raise ValueError(f"rate {c} outside [{rates[0]}, {rates[-1]}]")
    j = int(np.searchsorted(rates, c, side="left"))  # rates[j] >= c
    x = np.asarray(x, dtype=float)
    if rates[j] == c or mode == "round_up":
        return wz_eval(policy, x, j)
    if mode != "extended":
        raise ValueError(f"unknown mode {mode!r}")
    i = j - 1
    zi = float(policy.z[i])
    upper = np.asarray(wz_eval(policy, x, j), dtype=float)
    if zi <= 0:
        return model._out(upper)
    w_z = float(wz_eval(policy, zi, j))
    a_c = (w_z - model.v_constant(policy.params, c, zi)) / model.exp_gap(policy.params, c, zi)
    below = np.asarray(model.u_value(policy.params, c, a_c, x), dtype=float)
    return model._out(np.where(x < zi, below, upper))


@dataclass
class ConvergenceTable:
    levels: np.ndarray
    d: np.ndarray
    policies: list
    x_lattice: np.ndarray


def convergence_study(
    params: ModelParams, cbar: float, levels: int, opts: SolverOptions | None = None,
    n_x: int = 400, c_low: float = 0.0,
) -> ConvergenceTable:
    """``d_n = sup (V^{n+1} - V^n)`` for dyadic grids, ``n = 0..levels``."""
    if levels < 1:
        raise ValueError("levels must be at least 1")
    xs = np.linspace(0.0, 4.0 * model.b_star(params, cbar), n_x)
    pols = [solve_thresholds(params, RateGrid.dyadic(cbar, k, c_low), opts) for k in range(levels + 2)]
    d = np.empty(levels + 1)
    for k in range(levels + 1):
        coarse, fine = pols[k], pols[k + 1]
        worst = -np.inf
        for i in range(coarse.grid.n):
            # coarse rate i is fine rate 2i on the nested grid
            diff = wz_eval(fine, xs, 2 * i) - wz_eval(coarse, xs, i)
            worst = max(worst, float(np.max(diff)))
        d[k] = worst
    return ConvergenceTable(np.arange(levels + 1), d, pols, xs)
