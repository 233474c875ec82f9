import math

import numpy as np
import pytest
from scipy.stats import wasserstein_distance

from cmvlab.coefficients import catalog
from cmvlab.condexp import ParticleCloud
from cmvlab.errors import ArbitrageError, ConfigurationError
from cmvlab.lsv import (
    CallSurface,
    LocalVolSurface,
    black_scholes_surface,
    bs_call,
    calibrated_coefficients,
    cev_local_vol,
    dupire_from_surface,
    forward_pde_surface,
    interior_mask,
    reprice,
    simulate_calibrated_lsv,
)
from cmvlab.particlesim import SimConfig

T_AX = np.round(np.arange(0.1, 2.0001, 0.005), 10)
K_AX = np.round(np.arange(0.5, 2.0001, 0.005), 10)


@pytest.fixture(scope="module")
def flat_lv():
    return dupire_from_surface(black_scholes_surface(1.0, 0.2, T_AX, K_AX))


def test_bs_reference_value():
    assert bs_call(1.0, 1.0, 1.0, 0.2) == pytest.approx(0.0796557, abs=1e-7)
    assert bs_call(1.0, 0.0, 1.0, 0.2) == 1.0


@pytest.mark.parametrize("vol", [0.2, 0.3])
def test_flat_vol_recovered(vol):
    lv = dupire_from_surface(black_scholes_surface(1.0, vol, T_AX, K_AX))
    m = interior_mask(lv)
    assert m.sum() > 1000
    assert np.max(np.abs(lv.values[m] - vol)) < 2e-3


def test_cev_recovered_from_forward_pde():
    T = np.round(np.arange(0.2, 1.0001, 0.0025), 10)
    K = np.round(np.arange(0.5, 2.0001, 0.0025), 10)
    sig = cev_local_vol(1.0)
    lv = dupire_from_surface(forward_pde_surface(sig, 1.0, T, K, substeps=2))
    m = interior_mask(lv)
    assert np.max(np.abs(lv.values[m] / sig(K)[None, :].repeat(T.size, 0)[m] - 1)) < 0.01


def test_forward_pde_reproduces_black_scholes():
    T = np.round(np.arange(0.25, 1.0001, 0.25), 10)
    K = np.round(np.arange(0.7, 1.3001, 0.0025), 10)
    s = forward_pde_surface(lambda k: np.full_like(k, 0.2), 1.0, T, K, substeps=100)
    assert np.max(np.abs(s.prices - bs_call(1.0, K[None, :], T[:, None], 0.2))) < 1e-5


def test_arbitrage_error_names_cell():
    s = black_scholes_surface(1.0, 0.2, [0.5, 1.0], np.arange(0.8, 1.21, 0.05))
    P = s.prices.copy()
    P[1, 4] += 0.01
    with pytest.raises(ArbitrageError) as e:
        dupire_from_surface(CallSurface(s.maturities, s.strikes, P, 1.0))
    assert e.value.cell == (1, 4)
    assert "strike 1" in str(e.value)


def test_values_within_bounds_and_clamps_recorded(flat_lv):
    assert flat_lv.values.min() >= flat_lv.vol_min and flat_lv.values.max() <= flat_lv.vol_max
    assert flat_lv.clamped.dtype == bool
    lo, hi = flat_lv.flattening
    assert hi - math.log(1.0) == pytest.approx(3.0 * 0.2 * math.sqrt(2.0), rel=1e-3)


def test_surface_csv_roundtrip(tmp_path, flat_lv):
    s = black_scholes_surface(1.0, 0.2, [0.5, 1.0], [0.9, 1.0, 1.1])
    s.to_csv(tmp_path / "s.csv")
    back = CallSurface.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.prices, s.prices) and back.spot == s.spot
    flat_lv.to_csv(tmp_path / "lv.csv")
    lv = LocalVolSurface.from_csv(tmp_path / "lv.csv")
    assert np.array_equal(lv.values, flat_lv.values) and lv.flattening == flat_lv.flattening


def test_drift_tail_is_dissipative(flat_lv):
    b = flat_lv.drift_function(1.0)
    x = np.array([2.0, 3.0, -2.0, -3.0])
    v = b(x)
    assert v[1] - v[0] == pytest.approx(-0.01) and v[3] - v[2] == pytest.approx(0.01)
    assert calibrated_coefficients(flat_lv, catalog("independence"), 1.0).validated


def test_reprice_examples():
    one = ParticleCloud(np.array([0.0]), np.array([0.0]))
    assert reprice(one, [0.5]).prices[0] == pytest.approx(0.5)
    rng = np.random.default_rng(0)
    xs = rng.standard_normal(1000)
    c = ParticleCloud(xs, np.zeros_like(xs))
    assert reprice(c, [0.0]).prices[0] == pytest.approx(np.exp(xs).mean())


def test_reprice_lognormal_million():
    rng = np.random.default_rng(1)
    n = 1_000_000
    xs = -0.02 + 0.2 * rng.standard_normal(n)
    r = reprice(ParticleCloud(xs, np.zeros(n)), [1.0], 1.0, [0.079656])
    assert abs(r.z_scores[0]) < 3


def test_reprice_monotone_convex():
    rng = np.random.default_rng(2)
    xs = 0.3 * rng.standard_normal(5000)
    K = np.linspace(0.5, 1.5, 21)
    p = reprice(ParticleCloud(xs, np.zeros_like(xs)), K).prices
    assert np.all(np.diff(p) <= 1e-15) and np.all(np.diff(p, 2) >= -1e-15)


def test_flat_lsv_f1_is_black_scholes(flat_lv):
    n = 20_000
    out, cs = simulate_calibrated_lsv(flat_lv, catalog("ou"), SimConfig(n_particles=n, n_steps=500, seed=3, n_snapshots=2))
    T = 0.5
    xs = out.final_cloud.xs
    assert abs(xs.mean() + 0.5 * 0.04 * T) < 3 * 0.2 * math.sqrt(T / n)
    assert abs(xs.var() / (0.04 * T) - 1) < 3 * math.sqrt(2 / n)


def test_f1_matches_local_vol_euler():
    T = np.round(np.arange(0.2, 1.0001, 0.0025), 10)
    K = np.round(np.arange(0.5, 2.0001, 0.0025), 10)
    lv = dupire_from_surface(forward_pde_surface(cev_local_vol(1.0), 1.0, T, K, substeps=2))
    n, steps, dt = 20_000, 500, 1e-3
    out, cs = simulate_calibrated_lsv(lv, catalog("ou"), SimConfig(n_particles=n, n_steps=steps, seed=4, n_snapshots=2))
    rng = np.random.default_rng(99)
    x = np.zeros(n)
    for _ in range(steps):
        x = x + cs.b1(x) * dt + cs.sigma1(x) * math.sqrt(dt) * rng.standard_normal(n)
    scale = float(np.std(x))
    assert wasserstein_distance(out.final_cloud.xs, x) < 5 * scale / math.sqrt(n)


def test_invalid_vol_process_rejected(flat_lv):
    from dataclasses import replace

    from cmvlab.coefficients import SquaredFunction

    vp = catalog("independence")
    with pytest.raises(ConfigurationError):
        calibrated_coefficients(flat_lv, replace(vp, f=SquaredFunction(vp.f)), 1.0)
