"""JSON experiment configuration: schema, normalization and object builders.

A config is normalized once by :func:`parse_config`: unknown keys are rejected,
defaults are filled in and relative paths are resolved against the config
file's directory. Serializing the normalized document with :func:`dump_config`
and parsing it again is the identity.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np

from .coefficients import (
    CATALOG_NAMES,
    SquaredFunction,
    catalog,
    default_constants,
    function_from_dict,
    load_tabulated_csv,
    CoefficientSet,
    validate,
)
from .errors import ConfigurationError

SCHEMA_VERSION = 1
FUNCTION_NAMES = ("b1", "b2", "sigma1", "sigma2", "h", "f")

_REQUIRED = object()

SCHEMA = {
    "schema_version": _REQUIRED,
    "seed": 0,
    "coefficients": {
        "catalog": None,
        "params": {},
        "functions": None,
        "check_range": [-10.0, 10.0],
    },
    "simulation": {
        "n_particles": 10_000,
        "dt": 1e-3,
        "n_steps": 1000,
        "coupling_mode": "mckean-vlasov",
        "method": "euler",
        "estimator": {"kind": "binning", "n_bins": 100, "min_count": 5, "bandwidth": None, "grid_size": 101},
        "n_snapshots": 11,
        "burn_in_fraction": None,
        "hist_bins": 8,
        "allow_unvalidated": False,
        "override_dt_cap": False,
        "mimick": False,
    },
    "solver": {
        "grid": {"x": [-6.0, 6.0, 128], "y": [-6.0, 6.0, 128]},
        "tol": 1e-6,
        "max_iters": 200,
        "damping": 1.0,
        "adaptive": True,
        "mollifier": None,
        "product_tol": 1e-2,
    },
    "lsv": {
        "surface": {
            "kind": "black-scholes",
            "path": None,
            "vol": 0.2,
            "cev_power": -0.25,
            "spot": 1.0,
            "maturities": [0.1, 2.0, 0.005],
            "strikes": [0.5, 2.0, 0.005],
        },
        "vol_min": 0.01,
        "vol_max": 2.0,
        "flatten_width": 3.0,
        "tail_eps": 0.01,
        "moneyness": [0.8, 1.0, 1.2],
        "vol_process": "independence",
    },
    "output": {"directory": "out", "snapshot_times": None},
    "verify": {"checks": None, "scale": "small", "tolerances": {}, "tolerance_override": None},
}

# free-form sections whose inner keys are not checked against the schema
_OPEN = {("coefficients", "params"), ("coefficients", "functions"), ("verify", "tolerances"), ("solver", "mollifier")}


def _normalize(doc, schema, where=()):
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{'.'.join(where) or 'config'} must be a JSON object")
    unknown = sorted(set(doc) - set(schema))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in {'.'.join(where) or 'config'}")
    out = {}
    for key, default in schema.items():
        path = where + (key,)
        if key not in doc:
            if default is _REQUIRED:
                raise ConfigurationError(f"missing mandatory key {'.'.join(path)}")
            out[key] = copy.deepcopy(default)
        elif isinstance(default, dict) and path not in _OPEN:
            out[key] = _normalize(doc[key], default, path)
        else:
            out[key] = copy.deepcopy(doc[key])
    return out


def _resolve(p, base):
    if p is None:
        return None
    q = Path(p)
    return str(q if q.is_absolute() else (base / q).resolve())


def _resolve_paths(cfg, base):
    funcs = cfg["coefficients"]["functions"]
    if funcs:
        for spec in funcs.values():
            if isinstance(spec, dict) and "path" in spec:
                spec["path"] = _resolve(spec["path"], base)
    cfg["lsv"]["surface"]["path"] = _resolve(cfg["lsv"]["surface"]["path"], base)
    cfg["output"]["directory"] = _resolve(cfg["output"]["directory"], base)


def normalize_config(doc, base_dir="."):
    cfg = _normalize(doc, SCHEMA)
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {cfg['schema_version']!r} (expected {SCHEMA_VERSION})")
    seed = cfg["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    c = cfg["coefficients"]
    if (c["catalog"] is None) == (c["functions"] is None):
        raise ConfigurationError("coefficients needs exactly one of 'catalog' or 'functions'")
    if c["catalog"] is not None and c["catalog"] not in CATALOG_NAMES:
        raise ConfigurationError(f"unknown catalog entry {c['catalog']!r}")
    if c["functions"] is not None:
        missing = [n for n in FUNCTION_NAMES if n not in c["functions"]]
        extra = sorted(set(c["functions"]) - set(FUNCTION_NAMES))
        if missing or extra:
            raise ConfigurationError(f"functions must define exactly {list(FUNCTION_NAMES)} (missing {missing}, extra {extra})")
    if cfg["simulation"]["method"] not in ("euler", "time-change"):
        raise ConfigurationError("simulation.method must be 'euler' or 'time-change'")
    if cfg["lsv"]["surface"]["kind"] not in ("black-scholes", "cev", "csv"):
        raise ConfigurationError("lsv.surface.kind must be 'black-scholes', 'cev' or 'csv'")
    _resolve_paths(cfg, Path(base_dir).resolve())
    return cfg


def parse_config(path, seed=None, output=None):
    """Read, normalize and apply command-line overrides."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
    cfg = normalize_config(doc, path.parent)
    if seed is not None:
        cfg["seed"] = int(seed)
    if output is not None:
        cfg["output"]["directory"] = str(Path(output).resolve())
    return normalize_config(cfg, path.parent)


def dump_config(cfg):
    return json.dumps(cfg, sort_keys=True, indent=2)


def config_hash(cfg):
    """SHA-256 of the canonical JSON of the numeric content (output directory excluded)."""
    body = copy.deepcopy(cfg)
    body["output"].pop("directory", None)
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


# --- builders --------------------------------------------------------------


def _function(spec, name):
    if isinstance(spec, dict) and spec.get("kind") == "tabulated-csv":
        extra = set(spec) - {"kind", "path"}
        if extra or "path" not in spec:
            raise ConfigurationError(f"tabulated-csv spec for {name} takes exactly a 'path'")
        return load_tabulated_csv(spec["path"], name=name)
    if isinstance(spec, dict) and spec.get("kind") == "squared" and isinstance(spec.get("of"), str):
        return spec["of"]
    return function_from_dict(spec, name)


def build_coefficients(cfg) -> CoefficientSet:
    """Coefficient set with its validation flag; validation failures are not raised here."""
    c = cfg["coefficients"]
    lo, hi = map(float, c["check_range"])
    if c["catalog"] is not None:
        try:
            return catalog(c["catalog"], **c["params"])
        except TypeError as exc:
            raise ConfigurationError(f"bad catalog parameters: {exc}") from exc
    fns = {n: _function(c["functions"][n], n) for n in FUNCTION_NAMES}
    # {"kind": "squared", "of": "f"} ties h to the declared f
    for n, v in fns.items():
        if isinstance(v, str):
            if v not in fns or isinstance(fns[v], str):
                raise ConfigurationError(f"{n} refers to unknown function {v!r}")
            fns[n] = SquaredFunction(fns[v], n)
    constants = default_constants(**fns, check_range=(lo, hi))
    cs = CoefficientSet(constants=constants, **fns)
    cs, _ = validate(cs, (lo, hi))
    return cs


def build_sim_config(cfg):
    from .particlesim import EstimatorConfig, SimConfig

    s = cfg["simulation"]
    est = s["estimator"]
    unknown = set(est) - {"kind", "n_bins", "min_count", "bandwidth", "grid_size"}
    if unknown:
        raise ConfigurationError(f"unknown estimator keys {sorted(unknown)}")
    times = cfg["output"]["snapshot_times"]
    return SimConfig(
        n_particles=int(s["n_particles"]),
        dt=float(s["dt"]),
        n_steps=int(s["n_steps"]),
        seed=int(cfg["seed"]),
        estimator=EstimatorConfig(**est),
        coupling_mode=s["coupling_mode"],
        snapshot_times=None if times is None else tuple(float(t) for t in times),
        n_snapshots=int(s["n_snapshots"]),
        burn_in_fraction=s["burn_in_fraction"],
        allow_unvalidated=bool(s["allow_unvalidated"]),
        override_dt_cap=bool(s["override_dt_cap"]),
        hist_bins=int(s["hist_bins"]),
    )


def build_grid(cfg):
    g = cfg["solver"]["grid"]
    axes = []
    for k in ("x", "y"):
        lo, hi, n = g[k]
        if int(n) < 3 or not hi > lo:
            raise ConfigurationError(f"solver.grid.{k} must be [lo, hi, n] with hi > lo and n >= 3")
        axes.append(np.linspace(float(lo), float(hi), int(n)))
    return tuple(axes)


def build_mollifier(cfg):
    from .condexp import MollifierConfig

    m = cfg["solver"]["mollifier"]
    if m is None:
        return None
    try:
        return MollifierConfig(**m)
    except TypeError as exc:
        raise ConfigurationError(f"bad mollifier settings: {exc}") from exc


def axis_from_range(r, name):
    lo, hi, step = map(float, r)
    if not (hi > lo > 0 and step > 0):
        raise ConfigurationError(f"{name} must be [lo, hi, step] with 0 < lo < hi and step > 0")
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 12)
