import json
import os
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmvlab.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, _set_threads, main
from cmvlab.config import build_coefficients, build_sim_config, config_hash, dump_config, normalize_config, parse_config
from cmvlab.errors import ConfigurationError

ROOT = Path(__file__).resolve().parents[1]


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def _base(tmp_path, **kw):
    doc = {"schema_version": 1, "coefficients": {"catalog": "independence"}, "output": {"directory": str(tmp_path / "out")}}
    doc.update(kw)
    return doc


def test_schema_version_mandatory():
    with pytest.raises(ConfigurationError, match="schema_version"):
        normalize_config({"coefficients": {"catalog": "ou"}})


def test_unknown_nested_key_rejected():
    with pytest.raises(ConfigurationError, match="simulation"):
        normalize_config({"schema_version": 1, "coefficients": {"catalog": "ou"}, "simulation": {"n_particle": 5}})


def test_paths_resolved_relative_to_config(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "f.csv").write_text("x,value\n-5,1\n5,2\n")
    doc = {"schema_version": 1, "coefficients": {"functions": {
        "b1": {"kind": "affine-drift", "params": [-1.0, 0.0]},
        "b2": {"kind": "affine-drift", "params": [-1.0, 0.0]},
        "sigma1": {"kind": "constant", "params": [1.0]},
        "sigma2": {"kind": "constant", "params": [1.0]},
        "h": {"kind": "squared", "of": "f"},
        "f": {"kind": "tabulated-csv", "path": "f.csv"}}},
        "output": {"directory": "runs"}}
    p = _write(tmp_path / "sub", doc)
    cfg = parse_config(p)
    assert cfg["coefficients"]["functions"]["f"]["path"] == str((tmp_path / "sub" / "f.csv").resolve())
    assert cfg["output"]["directory"] == str((tmp_path / "sub" / "runs").resolve())
    cs = build_coefficients(cfg)
    assert cs.validated and cs.h_is_f2


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**63),
    n=st.integers(1, 10**6),
    dt=st.floats(1e-5, 1e-2),
    mode=st.sampled_from(["mckean-vlasov", "transformed", "decoupled"]),
    name=st.sampled_from(["ou", "independence", "general", "cubic"]),
    tol=st.floats(1e-10, 1e-2),
)
def test_parse_serialize_parse_identity(seed, n, dt, mode, name, tol):
    doc = {"schema_version": 1, "seed": seed, "coefficients": {"catalog": name},
           "simulation": {"n_particles": n, "dt": dt, "coupling_mode": mode}, "solver": {"tol": tol},
           "output": {"directory": "/tmp/x"}}
    once = normalize_config(doc)
    twice = normalize_config(json.loads(dump_config(once)))
    assert once == twice
    assert config_hash(once) == config_hash(twice)


def test_sim_config_built(tmp_path):
    cfg = parse_config(_write(tmp_path, _base(tmp_path, simulation={"n_particles": 7, "n_steps": 3})), seed=5)
    sim = build_sim_config(cfg)
    assert sim.n_particles == 7 and sim.seed == 5


def test_threads_env(monkeypatch):
    monkeypatch.setenv("CMVLAB_THREADS", "3")
    for v in ("OMP_NUM_THREADS", "NUMBA_NUM_THREADS"):
        monkeypatch.delenv(v, raising=False)
    assert _set_threads(None) == 3 and os.environ["OMP_NUM_THREADS"] == "3"
    assert _set_threads(2) == 2


def test_simulate_decoupled_deterministic(tmp_path):
    doc = _base(tmp_path, seed=3, simulation={"n_particles": 3000, "n_steps": 100, "coupling_mode": "decoupled",
                                               "n_snapshots": 3})
    p = _write(tmp_path, doc)
    blobs = []
    for k in range(2):
        assert main(["simulate", "--config", str(p), "--output", str(tmp_path / f"o{k}")]) == EXIT_OK
        blobs.append((tmp_path / f"o{k}" / "diagnostics.csv").read_bytes())
    assert blobs[0] == blobs[1]
    header = blobs[0].decode().splitlines()[0]
    assert "w1_x" in header and "w1_y" in header
    man = json.loads((tmp_path / "o0" / "manifest.json").read_text())
    assert man["seed"] == 3 and len(man["config_hash"]) == 64 and "numpy" in man["versions"]
    assert not (tmp_path / "o0" / ".cmvlab.lock").exists()


def test_simulate_rejects_expansive_drift(tmp_path, capsys):
    p = ROOT / "configs" / "simulate_bad_drift.json"
    assert main(["simulate", "--config", str(p), "--output", str(tmp_path)]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert "dissipative" in err["message"] and err["exit_code"] == 2


def test_locked_output(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".cmvlab.lock").write_text("1")
    p = _write(tmp_path, _base(tmp_path))
    assert main(["simulate", "--config", str(p)]) == EXIT_CONFIG
    assert "locked" in json.loads(capsys.readouterr().err)["message"]


def test_solve_fp_constant_f(tmp_path):
    doc = _base(tmp_path, coefficients={"catalog": "ou-const-f", "params": {"f0": 1.5}},
                solver={"grid": {"x": [-6, 6, 40], "y": [-6, 6, 40]}})
    assert main(["solve-fp", "--config", str(_write(tmp_path, doc))]) == EXIT_OK
    assert json.loads((tmp_path / "out" / "picard_report.json").read_text())["iterations"] == 1


def test_solve_fp_product_check(tmp_path):
    doc = _base(tmp_path, solver={"grid": {"x": [-6, 6, 64], "y": [-6, 6, 64]}})
    assert main(["solve-fp", "--config", str(_write(tmp_path, doc))]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "picard_report.json").read_text())
    assert rep["product_check"]["passed"] and rep["product_check"]["l1"] < 1e-2


def test_solve_fp_zero_budget(tmp_path):
    doc = _base(tmp_path, solver={"grid": {"x": [-6, 6, 32], "y": [-6, 6, 32]}, "max_iters": 0})
    assert main(["solve-fp", "--config", str(_write(tmp_path, doc))]) == EXIT_OK
    assert json.loads((tmp_path / "out" / "picard_report.json").read_text())["converged"] is False


def test_verify_subset_and_zero_tolerance(tmp_path):
    p = _write(tmp_path, _base(tmp_path))
    assert main(["verify", "--config", str(p), "--checks", "transform_roundtrip,g_identity"]) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "verification.json").read_text())
    assert [c["name"] for c in rep["checks"]] == ["transform_roundtrip", "g_identity"]
    doc = _base(tmp_path, verify={"tolerance_override": 0, "checks": ["mimicking", "stationary_oracle"]})
    assert main(["verify", "--config", str(_write(tmp_path, doc, "z.json"))]) == EXIT_VERIFY
    rep = json.loads((tmp_path / "out" / "verification.json").read_text())
    assert not any(c["passed"] for c in rep["checks"])


def test_lsv_demo_arbitrage(tmp_path, capsys):
    from cmvlab.lsv import CallSurface, black_scholes_surface
    import numpy as np

    s = black_scholes_surface(1.0, 0.2, [0.5, 1.0], np.arange(0.8, 1.21, 0.05))
    P = s.prices.copy()
    P[1, 4] += 0.01
    CallSurface(s.maturities, s.strikes, P, 1.0).to_csv(tmp_path / "bad.csv")
    doc = _base(tmp_path, lsv={"surface": {"kind": "csv", "path": "bad.csv"}})
    assert main(["lsv-demo", "--config", str(_write(tmp_path, doc))]) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ArbitrageError" and err["cell"] == [1, 4]


@pytest.mark.parametrize("vp", ["ou", "independence"])
def test_lsv_demo_flat(tmp_path, vp):
    doc = _base(tmp_path, seed=8, simulation={"n_particles": 20000, "n_steps": 250, "n_snapshots": 2},
                lsv={"vol_process": vp})
    assert main(["lsv-demo", "--config", str(_write(tmp_path, doc))]) == EXIT_OK
    lines = (tmp_path / "out" / "reprice.csv").read_text().splitlines()
    assert lines[0] == "strike,price,std_error,reference,z_score" and len(lines) == 4
