"""Monte Carlo estimates of expected discounted dividends until ruin.

Paths follow ``dX = (mu - C) dt + sigma dW`` on a fixed time step with the
rate decided from the pre-step state.  Every strategy is reduced to a rule
"keep the rate while the surplus is below a level, otherwise jump to a
larger rate", which is all the kernels need.

Two devices keep the cost manageable on a laptop without changing the
discretised estimator in any measurable way:

* While the rate cannot change, ``m`` fine steps are taken at once when an
  ``8 sigma`` band around the drifted path stays inside ``(0, level)``; the
  Gaussian increment over ``m`` steps is exact and the dividend sum is the
  closed-form geometric series of the fine-step sum.
* Ruin between grid times is detected with the Brownian-bridge crossing
  probability ``exp(-2 X_k X_{k+1} / (sigma^2 dt))``.

Random numbers come from SplitMix64 streams keyed by ``(seed, path)``, so
results do not depend on the number of threads.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numba as nb
import numpy as np

from .curve import CurvePolicy
from .finite import ThresholdPolicy
from .model import ModelParams

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer is often too old to load; prefer the portable ones
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LEAP_K = 8.0  # sigma-band kept clear of ruin during a leap
_LEAP_K_LEVEL = 6.0  # band kept clear of the switching level

KIND_LEVELS = 0  # piecewise: rates[i] with switching level z[i]
KIND_CURVE = 1  # linear-interpolated boundary over rate nodes


# --- strategy specifications ------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    rate: float


@dataclass(frozen=True)
class OneStep:
    barrier: float
    low: float
    high: float


@dataclass(frozen=True)
class Threshold:
    policy: ThresholdPolicy


@dataclass(frozen=True)
class Curve:
    policy: CurvePolicy


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    n_paths: int = 10_000
    seed: int = 0
    t_max: float | None = None
    antithetic: bool = False
    leap: bool = True
    bridge: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if self.antithetic and self.n_paths % 2:
            raise ValueError("antithetic sampling needs an even path count")


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    std_error: float
    n_paths: int
    truncation_bias_bound: float
    seed: int
    dt: float
    t_max: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _encode(spec, params: ModelParams):
    """(kind, rates, levels, cbar) arrays for the kernels."""
    if isinstance(spec, Constant):
        return KIND_LEVELS, np.array([float(spec.rate)]), np.zeros(0), float(spec.rate)
    if isinstance(spec, OneStep):
        if not spec.high > spec.low:
            raise ValueError("one-step strategy needs high > low")
        return KIND_LEVELS, np.array([spec.low, spec.high], float), np.array([spec.barrier], float), float(spec.high)
    if isinstance(spec, Threshold):
        pol = spec.policy
        return KIND_LEVELS, pol.rates.astype(float), pol.z.astype(float), float(pol.rates[-1])
    if isinstance(spec, Curve):
        pol = spec.policy
        if pol.trivial:
            return KIND_LEVELS, np.array([pol.cbar]), np.zeros(0), pol.cbar
        if pol.kind == "step":
            return KIND_LEVELS, pol._c.copy(), pol._z[:-1].copy(), pol.cbar
        return KIND_CURVE, pol._c.copy(), pol._z.copy(), pol.cbar
    raise TypeError(f"unknown strategy spec {type(spec).__name__}")


def _check_start(kind, rates, cbar, c0):
    lo = rates[0]
    if not (lo - 1e-12 <= c0 <= cbar + 1e-12):
        raise ValueError(f"initial rate {c0} not admissible for rates in [{lo}, {cbar}]")


# --- random numbers ----------------------------------------------------------------


@nb.njit(inline="always", cache=True)
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always", cache=True)
def _next(state):
    state = state + _GOLDEN
    return state, _mix(state)


@nb.njit(inline="always", cache=True)
def _uniform(state):
    state, r = _next(state)
    # 53 random bits in (0, 1]
    return state, ((r >> np.uint64(11)) + np.uint64(1)) * (1.0 / 9007199254740992.0)


@nb.njit(inline="always", cache=True)
def _stream(seed, path):
    return _mix(np.uint64(seed) ^ _mix(np.uint64(path) * _GOLDEN + np.uint64(1)))


# --- rate rule ---------------------------------------------------------------------


@nb.njit(inline="always", cache=True)
def _interval(rates, c):
    """Index i with rates[i] <= c < rates[i+1] (n-1 at the top)."""
    n = rates.size
    if c >= rates[n - 1]:
        return n - 1
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rates[mid] <= c:
            lo = mid
        else:
            hi = mid
    return lo


@nb.njit(cache=True)
def _level(kind, rates, levels, c):
    """Surplus at which rate ``c`` stops being held."""
    n = rates.size
    if c >= rates[n - 1]:
        return np.inf
    i = _interval(rates, c)
    if kind == KIND_LEVELS:
        return levels[i]
    w = (c - rates[i]) / (rates[i + 1] - rates[i])
    return levels[i] + w * (levels[i + 1] - levels[i])


@nb.njit(cache=True)
def _update(kind, rates, levels, c, x):
    """New (never smaller) rate for surplus ``x`` held at rate ``c``."""
    n = rates.size
    cbar = rates[n - 1]
    if kind == KIND_LEVELS:
        while c < cbar:
            i = _interval(rates, c)
            if x >= levels[i]:
                c = rates[i + 1]
            else:
                break
        return c
    if c >= cbar or x < _level(kind, rates, levels, c):
        return c
    i = _interval(rates, c)
    prev_c = c
    prev_z = _level(kind, rates, levels, c)
    for j in range(i + 1, n):
        if levels[j] > x:
            return prev_c + (x - prev_z) * (rates[j] - prev_c) / (levels[j] - prev_z)
        prev_c = rates[j]
        prev_z = levels[j]
    return cbar


# --- path kernel -------------------------------------------------------------------


@nb.njit(cache=True)
def _leap_steps(d, drift, sigma, dt, k):
    """Largest m with k sigma sqrt(m dt) + |drift| m dt <= d."""
    if d <= 0.0:
        return 0
    ad = abs(drift)
    if ad < 1e-300:
        s = d / (k * sigma)
    else:
        s = (-k * sigma + math.sqrt(k * k * sigma * sigma + 4.0 * ad * d)) / (2.0 * ad)
    steps = s * s / dt
    return int(steps) if steps < 4e18 else 4000000000000000000


@nb.njit(cache=True)
def _one_path(mu, sigma, q, kind, rates, levels, x0, c0, dt, n_steps, state, sign, leap, bridge):
    x = x0
    c = _update(kind, rates, levels, c0, x)
    level = _level(kind, rates, levels, c)
    drift = mu - c
    # below this distance to 0 or the level a two-step leap is never allowed
    band = _LEAP_K * sigma * math.sqrt(2.0 * dt) + abs(drift) * 2.0 * dt
    band_lv = _LEAP_K_LEVEL * sigma * math.sqrt(2.0 * dt) + abs(drift) * 2.0 * dt
    total = 0.0
    disc = 1.0
    k = 0
    sdt = sigma * math.sqrt(dt)
    disc_step = math.exp(-q * dt)
    cross = 2.0 / (sigma * sigma * dt)
    spare = 0.0
    have_spare = False
    while k < n_steps:
        if x >= level:
            c = _update(kind, rates, levels, c, x)
            level = _level(kind, rates, levels, c)
            drift = mu - c
            band = _LEAP_K * sigma * math.sqrt(2.0 * dt) + abs(drift) * 2.0 * dt
            band_lv = _LEAP_K_LEVEL * sigma * math.sqrt(2.0 * dt) + abs(drift) * 2.0 * dt
        m = 1
        if leap:
            if x >= band and level - x >= band_lv:
                m = min(_leap_steps(x, drift, sigma, dt, _LEAP_K), n_steps - k)
                if level < np.inf:
                    m = min(m, _leap_steps(level - x, drift, sigma, dt, _LEAP_K_LEVEL))
                m = max(m, 1)
        if have_spare:
            z = spare
            have_spare = False
        else:
            state, u1 = _uniform(state)
            state, u2 = _uniform(state)
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            spare = r * math.sin(2.0 * math.pi * u2)
            have_spare = True
        z *= sign
        if m == 1:
            total += disc * c * dt
            x_new = x + drift * dt + sdt * z
            disc *= disc_step
        else:
            block = math.exp(-q * m * dt)
            total += c * dt * disc * (1.0 - block) / (1.0 - disc_step)
            x_new = x + drift * m * dt + sdt * math.sqrt(m) * z
            disc *= block
        k += m
        if x_new < 0.0:
            return total, state
        if bridge:
            # crossing probability below e^-40 is treated as zero
            a = cross * x * x_new / m
            if a < 40.0:
                state, u = _uniform(state)
                if u < math.exp(-a):
                    return total, state
        x = x_new
    return total, state


@nb.njit(parallel=True, cache=True)
def _simulate(mu, sigma, q, kind, rates, levels, x0, c0, dt, n_steps, seed, n_paths, antithetic, leap, bridge):
    out = np.empty(n_paths)
    for p in nb.prange(n_paths):
        if antithetic:
            state = _stream(seed, p // 2)
            sign = 1.0 if p % 2 == 0 else -1.0
        else:
            state = _stream(seed, p)
            sign = 1.0
        out[p] = _one_path(mu, sigma, q, kind, rates, levels, x0, c0, dt, n_steps, state, sign, leap, bridge)[0]
    return out


@nb.njit(cache=True)
def _record_path(mu, sigma, q, kind, rates, levels, x0, c0, dt, n_steps, state, bridge, ts, xs, cs):
    x = x0
    c = _update(kind, rates, levels, c0, x)
    sq = math.sqrt(dt)
    ts[0], xs[0], cs[0] = 0.0, x, c
    spare = 0.0
    have_spare = False
    for k in range(n_steps):
        if have_spare:
            z = spare
            have_spare = False
        else:
            state, u1 = _uniform(state)
            state, u2 = _uniform(state)
            r = math.sqrt(-2.0 * math.log(u1))
            z = r * math.cos(2.0 * math.pi * u2)
            spare = r * math.sin(2.0 * math.pi * u2)
            have_spare = True
        x_new = x + (mu - c) * dt + sigma * sq * z
        ruined = x_new < 0.0
        if not ruined and bridge:
            state, u = _uniform(state)
            ruined = u < math.exp(-2.0 * x * x_new / (sigma * sigma * dt))
        x = x_new
        ts[k + 1] = (k + 1) * dt
        xs[k + 1] = x
        if ruined:
            cs[k + 1] = c
            return k + 2
        c = _update(kind, rates, levels, c, x)
        cs[k + 1] = c
    return n_steps + 1


# --- public API --------------------------------------------------------------------


def _horizon(params: ModelParams, config: SimConfig) -> float:
    t_max = config.t_max if config.t_max is not None else 40.0 / params.q
    if params.q * t_max < 20.0 - 1e-12:
        raise ValueError("t_max too short: need q * t_max >= 20")
    return t_max


def simulate_value(params: ModelParams, spec, x0: float, c0: float, config: SimConfig) -> SimEstimate:
    """Estimate ``J(x0; C)`` for the strategy ``spec`` started at rate ``c0``."""
    kind, rates, levels, cbar = _encode(spec, params)
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    if isinstance(spec, Constant):
        c0 = spec.rate
    _check_start(kind, rates, cbar, c0)
    t_max = _horizon(params, config)
    n_steps = int(math.ceil(t_max / config.dt))
    bound = cbar / params.q * math.exp(-params.q * n_steps * config.dt)
    if x0 == 0:
        return SimEstimate(0.0, 0.0, config.n_paths, bound, config.seed, config.dt, t_max)
    vals = _simulate(
        params.mu, params.sigma, params.q, kind, rates, levels, float(x0), float(c0),
        config.dt, n_steps, np.uint64(config.seed % 2**64), config.n_paths,
        config.antithetic, config.leap, config.bridge,
    )
    if config.antithetic:
        vals = 0.5 * (vals[0::2] + vals[1::2])
    n = vals.size
    mean = float(np.sum(vals) / n)
    se = float(np.std(vals, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return SimEstimate(mean, se, config.n_paths, bound, config.seed, config.dt, t_max)


@dataclass(frozen=True)
class PathRecord:
    t: np.ndarray
    x: np.ndarray
    c: np.ndarray


def sample_paths(params: ModelParams, spec, x0: float, c0: float, config: SimConfig, k: int) -> list[PathRecord]:
    """``k`` full fine-step trajectories (no leaping), stopped at ruin or ``t_max``."""
    if k > config.n_paths:
        raise ValueError("k must not exceed n_paths")
    kind, rates, levels, cbar = _encode(spec, params)
    if isinstance(spec, Constant):
        c0 = spec.rate
    _check_start(kind, rates, cbar, c0)
    t_max = _horizon(params, config)
    n_steps = int(math.ceil(t_max / config.dt))
    out = []
    for p in range(k):
        ts = np.empty(n_steps + 1)
        xs = np.empty(n_steps + 1)
        cs = np.empty(n_steps + 1)
        if x0 == 0:
            c_start = _update(kind, rates, levels, float(c0), 0.0)
            out.append(PathRecord(np.zeros(1), np.zeros(1), np.array([c_start])))
            continue
        state = np.uint64(_stream(np.uint64(config.seed % 2**64), np.uint64(p)))
        n = _record_path(params.mu, params.sigma, params.q, kind, rates, levels, float(x0), float(c0),
                         config.dt, n_steps, state, config.bridge, ts, xs, cs)
        out.append(PathRecord(ts[:n].copy(), xs[:n].copy(), cs[:n].copy()))
    return out
