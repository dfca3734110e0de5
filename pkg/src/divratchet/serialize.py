"""JSON and CSV round-tripping for policies, reports and tables.

Floats go to JSON through ``repr`` (exact round trip) and to CSV with 17
significant digits, so re-reading a file reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .curve import CurvePolicy
from .finite import RateGrid, ThresholdPolicy
from .model import ModelParams

SCHEMA_VERSION = 1


def fmt(v) -> str:
    return format(float(v), ".17g")


def write_csv(path, header, columns) -> Path:
    """Write equal-length columns under ``header``; LF line endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    n = {c.size for c in cols}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.empty((0, len(header)))
    return header, {h: data[:, i] for i, h in enumerate(header)}


def _clean(obj):
    """JSON-ready copy: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def _float(v):
    # non-finite values are stored as strings such as "inf"
    return float(v)


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="\n") as fh:
        json.dump(_clean(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_json(path):
    with Path(path).open() as fh:
        return json.load(fh)


def params_to_dict(p: ModelParams) -> dict:
    return {"mu": p.mu, "sigma": p.sigma, "q": p.q}


def params_from_dict(d: dict) -> ModelParams:
    return ModelParams(float(d["mu"]), float(d["sigma"]), float(d["q"]))


def threshold_to_dict(pol: ThresholdPolicy, foc=None) -> dict:
    out = {
        "type": "threshold_policy",
        "schema_version": SCHEMA_VERSION,
        "params": params_to_dict(pol.params),
        "rates": list(pol.grid.rates),
        "thresholds": pol.z,
        "coefficients": pol.a,
        "solver": pol.meta,
    }
    if foc is not None:
        out["foc_residuals"] = foc
    return out


def threshold_from_dict(d: dict) -> ThresholdPolicy:
    if d.get("type") != "threshold_policy":
        raise ValueError("not a threshold policy document")
    return ThresholdPolicy(
        params_from_dict(d["params"]), RateGrid(d["rates"]),
        np.array([_float(v) for v in d["thresholds"]]),
        np.array([_float(v) for v in d["coefficients"]]),
        meta=dict(d.get("solver", {})),
    )


def curve_to_dict(pol: CurvePolicy) -> dict:
    return {
        "type": "curve_policy",
        "schema_version": SCHEMA_VERSION,
        "params": params_to_dict(pol.params),
        "cbar": pol.cbar,
        "kind": pol.kind,
        "c_grid": pol.c_grid,
        "zeta": pol.zeta,
        "A": pol.A,
        "zbar": pol.zbar,
        "zeta_prime": pol.zeta_prime,
        "A_ode": pol.A_ode,
        "monotone_flag": pol.monotone_flag,
        "degeneracy_flag": pol.degeneracy_flag,
        "meta": pol.meta,
    }


def curve_from_dict(d: dict) -> CurvePolicy:
    if d.get("type") != "curve_policy":
        raise ValueError("not a curve policy document")

    def arr(key):
        v = d.get(key)
        return None if v is None else np.array([_float(x) for x in v])

    return CurvePolicy(
        params_from_dict(d["params"]), float(d["cbar"]), arr("c_grid"), arr("zeta"), arr("A"),
        float(d["zbar"]), monotone_flag=bool(d["monotone_flag"]),
        degeneracy_flag=bool(d["degeneracy_flag"]), kind=d.get("kind", "smooth"),
        zeta_prime=arr("zeta_prime"), A_ode=arr("A_ode"), meta=dict(d.get("meta", {})),
    )
