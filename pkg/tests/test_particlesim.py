import math
from dataclasses import replace

import numpy as np
import pytest

from cmvlab.coefficients import catalog
from cmvlab.condexp import CondExpectationField, ParticleCloud
from cmvlab.errors import ConfigurationError, NumericalBlowupError
from cmvlab.particlesim import (
    STREAM_STEP,
    EstimatorConfig,
    SimConfig,
    _Engine,
    initial_cloud,
    mimick_check,
    moment_bound,
    noise,
    reference_decoupled_step,
    run,
    run_time_change,
    step,
)


def _cloud(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    return ParticleCloud(rng.standard_normal(n), rng.standard_normal(n))


def test_noise_prefix_property():
    a = noise(5, 3, STREAM_STEP, 100)
    b = noise(5, 3, STREAM_STEP, 1000)
    assert np.array_equal(a, b[:100])
    assert not np.array_equal(a, noise(5, 4, STREAM_STEP, 100))


def test_decoupled_step_matches_reference():
    cs = catalog("general")
    cfg = SimConfig(n_particles=2000, coupling_mode="decoupled")
    c = _cloud()
    z = noise(0, 0, STREAM_STEP, len(c))
    out = step(c, cs, cfg, z)
    xr, yr = reference_decoupled_step(c.xs, c.ys, cs, cfg.dt, z)
    assert np.array_equal(out.xs, xr) and np.array_equal(out.ys, yr)


def test_constant_f_mv_equals_decoupled():
    cs = catalog("ou-const-f", f0=1.7, h0=0.4)
    c = _cloud()
    z = noise(1, 0, STREAM_STEP, len(c))
    a = step(c, cs, SimConfig(coupling_mode="mckean-vlasov"), z)
    b = step(c, cs, SimConfig(coupling_mode="decoupled"), z)
    assert np.allclose(a.xs, b.xs, rtol=0, atol=1e-14) and np.array_equal(a.ys, b.ys)


def test_transformed_mode_moves_factor_to_y():
    cs = catalog("independence")
    c = _cloud()
    eng = _Engine(cs, SimConfig(coupling_mode="transformed"))
    bx, sx, by, sy = eng.coefficients(c.xs, c.ys, None)
    assert np.all(np.asarray(sx) == cs.sigma1(c.xs))
    assert np.ptp(np.asarray(sy)) > 0


def test_frozen_fields_mode():
    cs = catalog("general")
    g = np.linspace(-8, 8, 5)
    fields = (CondExpectationField(g, np.full(5, 1.0 / 1.75), (0.5, 3.0), "exact-from-grid"),
              CondExpectationField(g, np.full(5, 1.0 / 2.25), (1.0, 4.0), "exact-from-grid"))
    cfg = SimConfig(coupling_mode="frozen-G", frozen_fields=fields)
    c = _cloud()
    bx, sx, _, _ = _Engine(cs, cfg).coefficients(c.xs, c.ys, None)
    assert np.allclose(bx, cs.b1(c.xs) * cs.h(c.ys) / 1.75)
    assert np.allclose(sx, cs.sigma1(c.xs) * cs.f(c.ys) / 1.5)


def test_kernel_estimator_runs():
    cs = catalog("independence")
    cfg = SimConfig(n_particles=3000, n_steps=20, estimator=EstimatorConfig(kind="kernel-regression"), n_snapshots=2)
    out = run(cs, cfg)
    assert np.isfinite(out.final_cloud.xs).all()


def test_refuses_unvalidated_and_large_dt():
    cs = catalog("independence")
    with pytest.raises(ConfigurationError):
        run(replace(cs, validated=False), SimConfig(n_particles=10, n_steps=1))
    with pytest.raises(ConfigurationError):
        run(cs, SimConfig(n_particles=10, n_steps=1, dt=0.1))


def test_blowup_is_reported():
    cs = catalog("ou")
    big = ParticleCloud(np.full(10, 1e100), np.zeros(10))
    cfg = SimConfig(n_particles=10, n_steps=5, dt=1e250, init="custom", init_cloud=big, override_dt_cap=True)
    with pytest.raises(NumericalBlowupError) as e:
        run(cs, cfg)
    assert e.value.step_index == 1


def test_run_is_deterministic(tmp_path):
    cs = catalog("independence")
    cfg = SimConfig(n_particles=5000, n_steps=100, seed=9, n_snapshots=3)
    paths = []
    for k in range(2):
        out = run(cs, cfg)
        p = tmp_path / f"d{k}.csv"
        out.write_diagnostics_csv(p)
        paths.append(p)
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_snapshot_files(tmp_path):
    cs = catalog("ou")
    out = run(cs, SimConfig(n_particles=100, n_steps=10, snapshot_times=(0.0, 0.005, 0.01)))
    files = out.write_snapshots(tmp_path)
    assert len(files) == 3
    data = np.loadtxt(files[-1], delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 1], out.final_cloud.xs)


def test_short_independence_run():
    cs = catalog("independence")
    n = 40_000
    out = run(cs, SimConfig(n_particles=n, n_steps=500, seed=2, n_snapshots=2))
    d = out.diagnostics[-1]
    assert abs(d.xy_correlation) < 4 / math.sqrt(n)
    assert d.w1_x < 0.03 and d.w1_y < 0.03
    assert d.second_moment < moment_bound(cs)


def test_time_change_requires_h_f2():
    with pytest.raises(ConfigurationError):
        run_time_change(catalog("general"), SimConfig(n_particles=10, n_steps=1))


def test_time_change_clock():
    cs = catalog("independence")
    cfg = SimConfig(n_particles=5000, n_steps=200, seed=4, n_snapshots=2)
    out = run_time_change(cs, cfg)
    k = cs.constants
    assert k.f_low**2 * cfg.dt <= out.extras["dtau_min"] <= out.extras["dtau_max"] <= k.f_high**2 * cfg.dt
    assert cfg.horizon * k.f_low**2 <= out.extras["tau_final_mean"] <= cfg.horizon * k.f_high**2


def test_initial_cloud_uses_init_stream():
    cs = catalog("independence")
    a = initial_cloud(cs, SimConfig(n_particles=100, seed=1))
    b = initial_cloud(cs, SimConfig(n_particles=200, seed=1))
    assert np.array_equal(a.xs, b.xs[:100])


def test_mimicking_short():
    cs = catalog("independence")
    out = run(cs, SimConfig(n_particles=20_000, n_steps=300, seed=5, n_snapshots=4))
    rep = mimick_check(out, cs)
    assert rep.w1_to_system[0] == 0.0
    assert np.max(rep.w1_to_system) < 0.03
