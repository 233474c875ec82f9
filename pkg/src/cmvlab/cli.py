"""Command-line front end: ``cmvlab {simulate,solve-fp,verify,lsv-demo} --config cfg.json``.

Exit codes: 0 success, 1 verification failure, 2 configuration or validation
error, 3 numerical failure. Errors are also printed to stderr as one JSON
object. Heavy modules are imported after the thread count is fixed.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from contextlib import contextmanager
from pathlib import Path

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
THREADS_ENV = "CMVLAB_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


class OutputLocked(Exception):
    pass


def _set_threads(n):
    if n is None:
        n = os.environ.get(THREADS_ENV)
    if n is None:
        return None
    n = int(n)
    if n < 1:
        raise ValueError("thread count must be positive")
    for var in _THREAD_VARS:
        os.environ[var] = str(n)
    return n


@contextmanager
def _locked(directory):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".cmvlab.lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError as exc:
        raise OutputLocked(f"output directory {directory} is locked by {lock}") from exc
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _versions():
    import numba
    import numpy
    import scipy

    from . import __version__

    return {"cmvlab": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def _manifest(out, cfg, command, threads, artifacts, extra=None):
    from .config import config_hash

    body = {
        "command": command,
        "config_hash": config_hash(cfg),
        "seed": cfg["seed"],
        "threads": threads,
        "versions": _versions(),
        "artifacts": sorted(artifacts),
        "config": cfg,
    }
    body.update(extra or {})
    _write_json(out / "manifest.json", body)


def _require_valid(cs, cfg):
    from .coefficients import validate_assumption_a
    from .errors import ConfigurationError

    if not cs.validated and not cfg["simulation"]["allow_unvalidated"]:
        report = validate_assumption_a(cs, tuple(cfg["coefficients"]["check_range"]))
        raise ConfigurationError("coefficient set violates the standing assumption: " + "; ".join(map(str, report)))


def cmd_simulate(cfg, out, threads):
    from .config import build_coefficients, build_sim_config
    from .particlesim import config_to_dict, mimick_check, moment_bound, run, run_time_change

    cs = build_coefficients(cfg)
    _require_valid(cs, cfg)
    sim = build_sim_config(cfg)
    mimick = cfg["simulation"]["mimick"]
    if cfg["simulation"]["method"] == "time-change":
        output = run_time_change(cs, sim)
    else:
        output = run(cs, sim, record_coefficients=mimick)
    output.write_diagnostics_csv(out / "diagnostics.csv")
    snaps = output.write_snapshots(out / "snapshots")
    artifacts = ["diagnostics.csv"] + [f"snapshots/{p.name}" for p in snaps]
    summary = {"sim_config": config_to_dict(sim), "burn_in_time": output.burn_in_time,
               "moment_bound": moment_bound(cs) if cs.h_is_f2 else None, "extras": output.extras,
               "constants": cs.constants.to_dict()}
    if mimick and output.coefficients is not None:
        summary["mimick"] = mimick_check(output, cs).to_dict()
    _write_json(out / "summary.json", summary)
    _manifest(out, cfg, "simulate", threads, artifacts + ["summary.json"])
    return EXIT_OK


def cmd_solve_fp(cfg, out, threads):
    from .config import build_coefficients, build_grid, build_mollifier
    from .fpsolver import default_initial, k_diagnostics, picard_iterate
    from .grid import product_density
    from .particlesim import stationary_marginals
    from .transform import apply_T_inverse

    cs = build_coefficients(cfg)
    _require_valid(cs, cfg)
    s = cfg["solver"]
    x, y = build_grid(cfg)
    q, report = picard_iterate(cs, default_initial(x, y), tol=float(s["tol"]), max_iters=int(s["max_iters"]),
                               mollify=build_mollifier(cfg), damping=float(s["damping"]), adaptive=bool(s["adaptive"]))
    p = apply_T_inverse(q, cs.f)
    q.to_csv(out / "fixed_point_transformed.csv")
    p.to_csv(out / "fixed_point.csv")
    rep = report.to_dict()
    code = EXIT_OK
    if cs.h_is_f2 and report.converged:
        m1, m2 = stationary_marginals(cs)
        l1 = p.l1_distance(product_density(m1, m2, x, y))
        rep["product_check"] = {"l1": l1, "tol": s["product_tol"], "passed": bool(l1 < s["product_tol"])}
        code = EXIT_OK if l1 < s["product_tol"] else EXIT_VERIFY
    _write_json(out / "picard_report.json", rep)
    _write_json(out / "k_diagnostics.json", k_diagnostics(q).to_dict())
    arts = ["fixed_point_transformed.csv", "fixed_point.csv", "picard_report.json", "k_diagnostics.json"]
    _manifest(out, cfg, "solve-fp", threads, arts)
    return code


def cmd_verify(cfg, out, threads, checks=None):
    from .verify import run_checks

    v = cfg["verify"]
    names = checks if checks is not None else v["checks"]
    results = run_checks(names, v["scale"], cfg["seed"], v["tolerances"], v["tolerance_override"])
    rows = [r.to_dict() for r in results]
    _write_json(out / "verification.json", {"checks": rows, "all_passed": all(r.passed for r in results)})
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.value:.6g} (tol {r.tolerance:.3g})")
    _manifest(out, cfg, "verify", threads, ["verification.json"])
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def _surface(cfg):
    from .config import axis_from_range
    from .lsv import CallSurface, black_scholes_surface, cev_local_vol, forward_pde_surface

    s = cfg["lsv"]["surface"]
    if s["kind"] == "csv":
        if s["path"] is None:
            from .errors import ConfigurationError

            raise ConfigurationError("lsv.surface.kind 'csv' needs a path")
        return CallSurface.from_csv(s["path"])
    T = axis_from_range(s["maturities"], "lsv.surface.maturities")
    K = axis_from_range(s["strikes"], "lsv.surface.strikes")
    if s["kind"] == "black-scholes":
        return black_scholes_surface(s["spot"], s["vol"], T, K)
    return forward_pde_surface(cev_local_vol(s["spot"], s["vol"], s["cev_power"]), s["spot"], T, K)


def cmd_lsv_demo(cfg, out, threads):
    import numpy as np

    from .coefficients import catalog
    from .config import build_sim_config
    from .lsv import bs_call, dupire_from_surface, reprice, simulate_calibrated_lsv

    L = cfg["lsv"]
    surface = _surface(cfg)
    lv = dupire_from_surface(surface, L["vol_min"], L["vol_max"], L["flatten_width"])
    surface.to_csv(out / "call_surface.csv")
    lv.to_csv(out / "local_vol.csv")
    sim = build_sim_config(cfg)
    output, cs = simulate_calibrated_lsv(lv, catalog(L["vol_process"]), sim, L["tail_eps"])
    strikes = np.asarray(L["moneyness"], dtype=float) * surface.spot
    T = sim.horizon
    if L["surface"]["kind"] == "black-scholes":
        ref = bs_call(surface.spot, strikes, T, L["surface"]["vol"])
    else:
        i = int(np.argmin(np.abs(surface.maturities - T)))
        ref = np.interp(strikes, surface.strikes, surface.prices[i])
    rep = reprice(output.final_cloud, strikes, surface.spot, ref)
    rep.to_csv(out / "reprice.csv")
    output.write_diagnostics_csv(out / "diagnostics.csv")
    z = rep.z_scores
    ok = bool(np.all(np.abs(z) <= 3.0))
    _manifest(out, cfg, "lsv-demo", threads, ["call_surface.csv", "local_vol.csv", "reprice.csv", "diagnostics.csv"],
              {"max_abs_z": float(np.max(np.abs(z))), "clamped_cells": int(lv.clamped.sum()),
               "flattening": list(lv.flattening)})
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {"simulate": cmd_simulate, "solve-fp": cmd_solve_fp, "verify": cmd_verify, "lsv-demo": cmd_lsv_demo}


def build_parser():
    p = argparse.ArgumentParser(prog="cmvlab", description="Conditional McKean-Vlasov experiments.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--output", help="output directory (overrides the config)")
        sp.add_argument("--seed", type=int, help="seed (overrides the config)")
        sp.add_argument("--threads", type=int, help=f"thread count (default from ${THREADS_ENV})")
        if name == "verify":
            sp.add_argument("--checks", help="comma-separated subset of checks")
    return p


def _error(code, exc):
    payload = {"exit_code": code, "error": type(exc).__name__, "message": str(exc)}
    for attr in ("cell", "step_index", "residual"):
        v = getattr(exc, attr, None)
        if v is not None:
            payload[attr] = v if not isinstance(v, tuple) else list(v)
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        threads = _set_threads(args.threads)
    except ValueError as exc:
        return _error(EXIT_CONFIG, exc)
    from .config import parse_config
    from .errors import (
        ArbitrageError,
        ConfigurationError,
        DegenerateDensityError,
        DiscretizationError,
        DomainError,
        EllipticityError,
        EstimationError,
        InputError,
        NumericalBlowupError,
        SolverError,
    )

    config_errors = (ConfigurationError, InputError, ArbitrageError, EllipticityError, DomainError, OutputLocked)
    numeric_errors = (NumericalBlowupError, SolverError, DiscretizationError, EstimationError, DegenerateDensityError,
                      FloatingPointError)
    try:
        cfg = parse_config(args.config, args.seed, args.output)
        out = Path(cfg["output"]["directory"])
        with _locked(out):
            fn = COMMANDS[args.command]
            if args.command == "verify":
                checks = None if args.checks is None else [c.strip() for c in args.checks.split(",") if c.strip()]
                return fn(cfg, out, threads, checks)
            return fn(cfg, out, threads)
    except config_errors as exc:
        return _error(EXIT_CONFIG, exc)
    except numeric_errors as exc:
        return _error(EXIT_NUMERIC, exc)


if __name__ == "__main__":
    sys.exit(main())
