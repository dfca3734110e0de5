"""Command-line entry point.

    divratchet solve-finite --config run.yaml --out results/
    divratchet solve-curve --cbar 8
    divratchet figures --config run.yaml
    divratchet simulate --seed 3
    divratchet converge
    divratchet verify --policy results/curve_policy.json

The config is a YAML (or JSON) document; every key is optional and unknown
keys are rejected.  Exit codes: 0 success, 2 configuration error, 3 numerical
failure.  Verification failures are reported in the output, not via the exit
code.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import curve, finite, model, serialize
from .finite import SolverError

log = logging.getLogger("divratchet")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(Exception):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ParamsCfg(_Strict):
    mu: float = Field(4.0, gt=0)
    sigma: float = Field(2.0, gt=0)
    q: float = Field(0.1, gt=0)


class ProblemCfg(_Strict):
    cbar: float = Field(4.0, gt=0)
    c_low: float = Field(0.0, ge=0)
    rates: Optional[list[float]] = None
    grid_level: Optional[int] = Field(None, ge=0, le=12)
    figure_cbars: Optional[list[float]] = None

    @field_validator("rates")
    @classmethod
    def _rates_ok(cls, v):
        if v is None:
            return v
        if len(v) < 1:
            raise ValueError("rate list must not be empty")
        if any(b <= a for a, b in zip(v, v[1:])) or any(r < 0 for r in v):
            raise ValueError("rates must be nonnegative and strictly increasing")
        return v

    @model_validator(mode="after")
    def _consistent(self):
        if self.c_low >= self.cbar:
            raise ValueError("c_low must be below cbar")
        return self


class SolverCfg(_Strict):
    scan_points: int = Field(2000, ge=10)
    x_max: Optional[float] = Field(None, gt=0)
    curve_steps: Optional[int] = Field(None, ge=10)
    curve_method: Literal["rk4", "euler"] = "rk4"
    degeneracy_floor: float = Field(1e-10, gt=0)
    tol: float = Field(1e-4, gt=0)
    levels: int = Field(6, ge=1, le=10)


class SimCfg(_Strict):
    strategy: Literal["constant", "one_step", "threshold", "curve"] = "constant"
    rate: Optional[float] = Field(None, ge=0)
    x0: float = Field(5.0, ge=0)
    c0: float = Field(0.0, ge=0)
    dt: float = Field(1e-3, gt=0)
    n_paths: int = Field(200_000, ge=1)
    seed: int = Field(0, ge=0)
    t_max: Optional[float] = Field(None, gt=0)
    antithetic: bool = False


class LatticeCfg(_Strict):
    n_x: int = Field(400, ge=2)
    x_max: Optional[float] = Field(None, gt=0)
    n_c: int = Field(41, ge=2)


class OutputCfg(_Strict):
    dir: str = "results"
    format: Literal["csv", "json"] = "csv"


class RunConfig(_Strict):
    params: ParamsCfg = ParamsCfg()
    problem: ProblemCfg = ProblemCfg()
    solver: SolverCfg = SolverCfg()
    sim: SimCfg = SimCfg()
    lattice: LatticeCfg = LatticeCfg()
    output: OutputCfg = OutputCfg()


def load_config(path: str | None, overrides: dict) -> RunConfig:
    raw: dict = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a mapping at the top level")
        for key in ("params", "problem"):
            if key in raw and raw[key] is None:
                raise ConfigError(f"section '{key}' is empty")
    for dotted, value in overrides.items():
        if value is None:
            continue
        section, key = dotted.split(".")
        node = raw.setdefault(section, {})
        if not isinstance(node, dict):
            raise ConfigError(f"section '{section}' must be a mapping")
        node[key] = value
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


# --- helpers ---------------------------------------------------------------------


def _params(cfg: RunConfig) -> model.ModelParams:
    return model.ModelParams(cfg.params.mu, cfg.params.sigma, cfg.params.q)


def _rate_grid(cfg: RunConfig) -> finite.RateGrid:
    pr = cfg.problem
    if pr.rates is not None:
        return finite.RateGrid(pr.rates)
    if pr.grid_level is not None:
        return finite.RateGrid.dyadic(pr.cbar, pr.grid_level, pr.c_low)
    return finite.RateGrid([pr.c_low, pr.cbar])


def _solver_opts(cfg: RunConfig) -> finite.SolverOptions:
    return finite.SolverOptions(n_scan=cfg.solver.scan_points, x_max=cfg.solver.x_max)


def _curve_opts(cfg: RunConfig, c_low: float | None = None) -> curve.CurveOptions:
    s = cfg.solver
    return curve.CurveOptions(
        steps=s.curve_steps, method=s.curve_method,
        c_low=cfg.problem.c_low if c_low is None else c_low,
        degeneracy_floor=s.degeneracy_floor, x_max=s.x_max,
    )


def _x_lattice(cfg: RunConfig, params, cbar: float) -> np.ndarray:
    top = cfg.lattice.x_max or 4.0 * model.b_star(params, cbar) + 5.0 * params.sigma2 / params.mu
    return np.linspace(0.0, top, cfg.lattice.n_x)


def _table(out: Path, stem: str, fmt: str, header, columns) -> Path:
    if fmt == "json":
        cols = [np.asarray(c, dtype=float).ravel() for c in columns]
        return serialize.write_json(out / f"{stem}.json", {"columns": list(header), "data": {h: c for h, c in zip(header, cols)}})
    return serialize.write_csv(out / f"{stem}.csv", header, columns)


def _tag(cbar: float) -> str:
    return format(cbar, "g").replace(".", "p")


def _solve_curve_checked(params, cbar, opts, tol):
    pol, rep = curve.solve_continuum(params, cbar, opts, tol)
    if pol.degeneracy_flag:
        raise SolverError(
            f"curve ODE degenerated at c={pol.meta.get('reached_c')}; partial curve has "
            f"{pol.c_grid.size} samples"
        )
    return pol, rep


# --- commands --------------------------------------------------------------------


def cmd_solve_finite(cfg: RunConfig, out: Path) -> list[Path]:
    params = _params(cfg)
    grid = _rate_grid(cfg)
    pol = finite.solve_thresholds(params, grid, _solver_opts(cfg))
    foc = [finite.foc_residual(pol, i) for i in range(grid.n - 1)]
    files = [serialize.write_json(out / "policy.json", serialize.threshold_to_dict(pol, foc))]
    xs = _x_lattice(cfg, params, grid.cbar)
    x_col, c_col, w_col = [], [], []
    for i, c in enumerate(grid.rates):
        x_col.append(xs)
        c_col.append(np.full(xs.size, c))
        w_col.append(np.atleast_1d(finite.wz_eval(pol, xs, i)))
    files.append(_table(out, "values", cfg.output.format, ["x", "c", "W"],
                        [np.concatenate(x_col), np.concatenate(c_col), np.concatenate(w_col)]))
    scale = grid.cbar / params.q
    files.append(serialize.write_json(out / "foc_report.json", {
        "rates": list(grid.rates[:-1]), "thresholds": pol.z,
        "residuals": [None if r is None else r for r in foc],
        "boundary": [r is None for r in foc],
        "max_abs_residual": max([abs(r) for r in foc if r is not None], default=0.0),
        "tolerance": 1e-6 * scale,
    }))
    return files


def cmd_solve_curve(cfg: RunConfig, out: Path) -> list[Path]:
    params = _params(cfg)
    cbar = cfg.problem.cbar
    pol, rep = _solve_curve_checked(params, cbar, _curve_opts(cfg), cfg.solver.tol)
    files = [
        serialize.write_json(out / "curve_policy.json", serialize.curve_to_dict(pol)),
        _table(out, "curve", cfg.output.format, ["c", "zeta", "A"], [pol.c_grid, pol.zeta, pol.A]),
    ]
    report = rep.to_dict()
    report.update({"cbar": cbar, "zeta_at_c_low": float(pol.zeta[-1]), "b_star": model.b_star(params, cbar),
                   "zbar": pol.zbar, "monotone": pol.monotone_flag})
    files.append(serialize.write_json(out / "verification.json", report))
    xs = _x_lattice(cfg, params, cbar)
    cs = np.linspace(pol.c_low, cbar, cfg.lattice.n_c)
    X, C, W = [], [], []
    for c in cs:
        X.append(xs)
        C.append(np.full(xs.size, c))
        W.append(np.atleast_1d(curve.w_eval(pol, xs, c)))
    files.append(_table(out, "surface", cfg.output.format, ["x", "c", "W"],
                        [np.concatenate(X), np.concatenate(C), np.concatenate(W)]))
    return files


def cmd_figures(cfg: RunConfig, out: Path) -> list[Path]:
    params = _params(cfg)
    cbars = cfg.problem.figure_cbars or [cfg.problem.cbar]
    fmt = cfg.output.format
    files = []
    for cbar in cbars:
        c_low = min(cfg.problem.c_low, 0.5 * cbar)
        pol, _ = _solve_curve_checked(params, cbar, _curve_opts(cfg, c_low), cfg.solver.tol)
        one = finite.solve_thresholds(params, finite.RateGrid([c_low, cbar]), _solver_opts(cfg))
        xs = _x_lattice(cfg, params, cbar)
        vs = np.atleast_1d(curve.w_eval(pol, xs, c_low))
        vnr = np.atleast_1d(model.v_unrestricted(params, cbar, xs))
        v1 = np.atleast_1d(finite.wz_eval(one, xs, 0))
        tag = _tag(cbar)
        bstar = model.b_star(params, cbar)
        files += [
            _table(out, f"fig_values_cbar{tag}", fmt, ["x", "V_S", "V_NR", "V_1"], [xs, vs, vnr, v1]),
            _table(out, f"fig_curve_cbar{tag}", fmt, ["c", "zeta", "b_star", "b_R_star"],
                   [pol.c_grid[::-1], pol.zeta[::-1], np.full(pol.c_grid.size, bstar),
                    np.full(pol.c_grid.size, one.z[0])]),
            _table(out, f"fig_loss_nr_cbar{tag}", fmt, ["x", "V_NR_minus_V_S"], [xs, vnr - vs]),
            _table(out, f"fig_gain_onestep_cbar{tag}", fmt, ["x", "V_S_minus_V_1"], [xs, vs - v1]),
        ]
    return files


def _sim_strategy(cfg: RunConfig, params):
    from . import simulate

    s, pr = cfg.sim, cfg.problem
    if s.strategy == "constant":
        rate = pr.cbar if s.rate is None else s.rate
        return simulate.Constant(rate), float(model.v_constant(params, rate, s.x0)), rate
    grid = _rate_grid(cfg) if s.strategy != "one_step" else finite.RateGrid([pr.c_low, pr.cbar])
    if s.strategy in ("one_step", "threshold"):
        pol = finite.solve_thresholds(params, grid, _solver_opts(cfg))
        c0 = min(max(s.c0, grid.rates[0]), grid.cbar)
        analytic = float(finite.extend_value(pol, s.x0, c0, mode="extended"))
        if s.strategy == "one_step":
            return simulate.OneStep(float(pol.z[0]), grid.rates[0], grid.cbar), analytic, c0
        return simulate.Threshold(pol), analytic, c0
    pol, _ = _solve_curve_checked(params, pr.cbar, _curve_opts(cfg), cfg.solver.tol)
    c0 = min(max(s.c0, pol.c_low), pr.cbar)
    return simulate.Curve(pol), float(curve.w_eval(pol, s.x0, c0)), c0


def cmd_simulate(cfg: RunConfig, out: Path) -> list[Path]:
    from . import simulate

    params = _params(cfg)
    spec, analytic, c0 = _sim_strategy(cfg, params)
    s = cfg.sim
    conf = simulate.SimConfig(dt=s.dt, n_paths=s.n_paths, seed=s.seed, t_max=s.t_max, antithetic=s.antithetic)
    t0 = time.perf_counter()
    est = simulate.simulate_value(params, spec, s.x0, c0, conf)
    elapsed = time.perf_counter() - t0
    delta = est.mean - analytic
    report = est.to_dict()
    report.update({
        "strategy": s.strategy, "x0": s.x0, "c0": c0, "analytic": analytic, "delta": delta,
        "delta_in_se": delta / est.std_error if est.std_error > 0 else 0.0,
        "within_3se": abs(delta) <= 3.0 * est.std_error + 1e-15, "seconds": elapsed,
    })
    return [serialize.write_json(out / "simulation.json", report)]


def cmd_converge(cfg: RunConfig, out: Path) -> list[Path]:
    params = _params(cfg)
    pr = cfg.problem
    levels = cfg.solver.levels
    tab = finite.convergence_study(params, pr.cbar, levels, _solver_opts(cfg), n_x=cfg.lattice.n_x, c_low=pr.c_low)
    files = [_table(out, "convergence", cfg.output.format, ["n", "d_n"], [tab.levels, tab.d])]
    summary = {"levels": tab.levels, "d_n": tab.d,
               "nonnegative": bool(np.all(tab.d >= -1e-12)),
               "decreasing": bool(np.all(np.diff(tab.d[1:]) < 0))}
    if pr.cbar > model.trivial_threshold(params):
        pol, _ = _solve_curve_checked(params, pr.cbar, _curve_opts(cfg), cfg.solver.tol)
        fine = tab.policies[levels]
        gap = -math.inf
        for i, c in enumerate(fine.grid.rates):
            gap = max(gap, float(np.max(curve.w_eval(pol, tab.x_lattice, c) - finite.wz_eval(fine, tab.x_lattice, i))))
        summary.update({"sup_curve_minus_finest": gap, "d_last": float(tab.d[-1]),
                        "gap_within_5_d_last": gap <= 5.0 * float(tab.d[-1])})
    files.append(serialize.write_json(out / "convergence_summary.json", summary))
    return files


def cmd_verify(cfg: RunConfig, out: Path, policy_path: str | None = None) -> list[Path]:
    if policy_path is not None:
        try:
            pol = serialize.curve_from_dict(serialize.read_json(policy_path))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"cannot load curve policy {policy_path}: {exc}") from exc
        rep = curve.verify(pol, cfg.solver.tol)
    else:
        pol, rep = _solve_curve_checked(_params(cfg), cfg.problem.cbar, _curve_opts(cfg), cfg.solver.tol)
    report = rep.to_dict()
    report.update({"cbar": pol.cbar, "policy": policy_path})
    return [serialize.write_json(out / "verification.json", report)]


COMMANDS = {
    "solve-finite": cmd_solve_finite,
    "solve-curve": cmd_solve_curve,
    "figures": cmd_figures,
    "simulate": cmd_simulate,
    "converge": cmd_converge,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="divratchet", description="Optimal dividend ratcheting solver")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML or JSON run configuration")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="simulation seed (overrides sim.seed)")
        p.add_argument("--cbar", type=float, help="maximal dividend rate (overrides problem.cbar)")
        p.add_argument("--format", choices=["csv", "json"], help="table format (overrides output.format)")
        if name == "verify":
            p.add_argument("--policy", help="curve policy JSON to verify instead of solving")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    overrides = {"output.dir": args.out, "sim.seed": args.seed, "problem.cbar": args.cbar,
                 "output.format": args.format}
    try:
        cfg = load_config(args.config, overrides)
        out = Path(cfg.output.dir)
        if args.command == "verify":
            files = cmd_verify(cfg, out, args.policy)
        else:
            files = COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, ArithmeticError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # invalid combinations caught by the solvers (e.g. an off-range rate)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        log.info("wrote %s", f)
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
