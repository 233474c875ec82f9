"""Euler-Maruyama particle systems for the conditional McKean-Vlasov SDE.

``dX = b1(X) h(Y) / E[h(Y) | X] dt + sigma1(X) f(Y) / sqrt(E[f(Y)**2 | X]) dW``,
``dY = b2(Y) dt + sigma2(Y) dB``. The conditional expectations are replaced by
estimates from the current particle cloud at every step.

Noise is counter based: the draws for step ``k`` come from a generator seeded
by ``(seed, k, stream)`` and particle ``i`` reads row ``i``, so enlarging the
cloud never changes the noise of existing particles.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import wasserstein_distance

from .coefficients import CoefficientSet
from ._kernels import bin_sums, gather_factors
from .condexp import (
    ParticleCloud,
    _clamp,
    binned_ratio,
    default_bandwidth,
    kernel_regression,
    ratio_from_sums,
)
from .errors import ConfigurationError, InputError, NumericalBlowupError
from .metrics import independence_l1, pearson
from .stationary1d import build_stationary_density, default_domain, wasserstein1

log = logging.getLogger(__name__)

MODES = ("mckean-vlasov", "transformed", "frozen-G", "decoupled")
ESTIMATORS = ("binning", "kernel-regression")
INITS = ("product-stationary", "custom")

STREAM_STEP = 0
STREAM_INIT = 1
STREAM_TC_PRESTEP = 2
STREAM_TC_SUB = 3
STREAM_MIMIC = 1000


def noise(seed, step, stream, n, k=2):
    """Standard normals of shape ``(n, k)``; row ``i`` depends only on ``(seed, step, stream, i)``."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(step), int(stream)])))
    return rng.standard_normal((n, k))


def uniform_interp(x, lo, h, values):
    """Linear interpolation on the uniform grid ``lo + h * arange(n)``, flat outside."""
    n = values.size
    t = np.clip((x - lo) / h, 0.0, n - 1.0)
    i = np.minimum(t.astype(np.intp), n - 2)
    lam = t - i
    return values[i] + lam * (values[i + 1] - values[i])


def _ev(fn, x):
    """Evaluate a coefficient; constants come back as Python floats (cheap broadcasting)."""
    if getattr(fn, "kind", None) == "constant":
        return fn.params[0]
    return fn(x)


def _same_function(a, b):
    return (a.kind, a.params, a.shape) == (b.kind, b.params, b.shape)


def uniforms(seed, step, stream, n, k=2):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(step), int(stream)])))
    return rng.random((n, k))


@dataclass(frozen=True)
class EstimatorConfig:
    kind: str = "binning"
    n_bins: int = 100
    min_count: int = 5
    bandwidth: float = None
    grid_size: int = 101

    def __post_init__(self):
        if self.kind not in ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.kind!r}")
        if self.n_bins < 1 or self.min_count < 1 or self.grid_size < 2:
            raise ConfigurationError("n_bins, min_count must be >= 1 and grid_size >= 2")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ConfigurationError("bandwidth must be positive")


@dataclass(frozen=True)
class SimConfig:
    n_particles: int = 10_000
    dt: float = 1e-3
    n_steps: int = 1000
    seed: int = 0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    coupling_mode: str = "mckean-vlasov"
    init: str = "product-stationary"
    init_cloud: ParticleCloud = None
    snapshot_times: tuple = None
    n_snapshots: int = 11
    burn_in_fraction: float = None
    frozen_fields: tuple = None
    allow_unvalidated: bool = False
    override_dt_cap: bool = False
    hist_bins: int = 8

    def __post_init__(self):
        if self.n_particles < 1 or self.n_steps < 1:
            raise ConfigurationError("n_particles and n_steps must be positive")
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigurationError("seed must be a 64-bit unsigned integer")
        if self.coupling_mode not in MODES:
            raise ConfigurationError(f"unknown coupling mode {self.coupling_mode!r}")
        if self.init not in INITS:
            raise ConfigurationError(f"unknown init {self.init!r}")
        if self.init == "custom" and self.init_cloud is None:
            raise ConfigurationError("custom init requires init_cloud")
        if self.coupling_mode == "frozen-G" and (self.frozen_fields is None or len(self.frozen_fields) != 2):
            raise ConfigurationError("frozen-G mode requires frozen_fields = (G_h, G_f2)")
        if self.burn_in_fraction is not None and not 0 <= self.burn_in_fraction < 1:
            raise ConfigurationError("burn_in_fraction must lie in [0, 1)")
        if self.n_snapshots < 1:
            raise ConfigurationError("n_snapshots must be positive")

    @property
    def horizon(self):
        return self.dt * self.n_steps

    def snapshot_steps(self):
        if self.snapshot_times is None:
            steps = np.round(np.linspace(0, self.n_steps, self.n_snapshots)).astype(int)
        else:
            t = np.asarray(self.snapshot_times, dtype=float)
            if np.any(t < 0) or np.any(t > self.horizon * (1 + 1e-12)):
                raise ConfigurationError("snapshot times must lie in [0, horizon]")
            steps = np.round(t / self.dt).astype(int)
        return np.unique(np.clip(steps, 0, self.n_steps))


@dataclass(frozen=True)
class SnapshotDiagnostics:
    time: float
    second_moment: float
    second_moment_se: float
    xy_correlation: float
    hist_l1: float
    w1_x: float
    w1_y: float
    in_burn_in: bool


DIAG_COLUMNS = ("time", "second_moment", "second_moment_se", "xy_correlation", "hist_l1", "w1_x", "w1_y", "in_burn_in")


@dataclass(eq=False)
class SimOutput:
    final_cloud: ParticleCloud
    snapshot_times: np.ndarray
    snapshots: list
    diagnostics: list
    mode: str
    config: SimConfig
    burn_in_time: float = 0.0
    coefficients: list = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.diagnostics) != len(self.snapshots):
            raise InputError("diagnostics and snapshots differ in length")

    def diagnostics_rows(self):
        return [[getattr(d, c) for c in DIAG_COLUMNS] for d in self.diagnostics]

    def write_diagnostics_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DIAG_COLUMNS)
            for row in self.diagnostics_rows():
                w.writerow([repr(float(v)) if not isinstance(v, bool) else int(v) for v in row])

    def write_snapshots(self, directory, which="all"):
        """One CSV per snapshot with columns particle_index, x, y, weight."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        idx = range(len(self.snapshots)) if which == "all" else [len(self.snapshots) - 1]
        paths = []
        for k in idx:
            c = self.snapshots[k]
            path = directory / f"snapshot_{k:03d}_t{self.snapshot_times[k]:.6f}.csv"
            table = np.column_stack([np.arange(len(c)), c.xs, c.ys, c.weights])
            np.savetxt(path, table, fmt=["%d", "%.17g", "%.17g", "%.17g"], delimiter=",",
                       header="particle_index,x,y,weight", comments="")
            paths.append(path)
        return paths


def stationary_marginals(cs: CoefficientSet, grid_size=4097):
    """The closed-form one-dimensional stationary densities of X and Y."""
    k = cs.constants
    m1 = build_stationary_density(cs.b1, cs.sigma1, default_domain(k), grid_size)
    m2 = build_stationary_density(cs.b2, cs.sigma2, default_domain(k), grid_size)
    return m1, m2


def moment_bound(cs: CoefficientSet):
    """``(2 Sigma + C1bar) / cbar`` for the frozen-coefficient system.

    The conditional drift factor ``h(Y) G^h(X)`` lies in ``[r, 1 / r]`` with
    ``r = h_low / h_high``, so ``cbar = c r`` and ``C1bar = C1 / r``; the
    X-diffusion squared is at most ``sigma_high**2 f_high**2 / f_low**2``.
    """
    k = cs.constants
    r = k.h_low / k.h_high
    cbar = k.c * r
    C1bar = k.C1 / r
    two_sigma = max(k.sigma_high**2 * k.f_high**2 / k.f_low**2, k.sigma_high**2)
    return (two_sigma + C1bar) / cbar


class _Engine:
    """Per-run state shared by the step function: bounds, constancy flags, estimator."""

    def __init__(self, cs: CoefficientSet, cfg: SimConfig):
        self.cs, self.cfg = cs, cfg
        k = cs.constants
        self.h_const = bool(getattr(cs.h, "is_constant", False))
        self.f_const = bool(getattr(cs.f, "is_constant", False))
        self.h_bounds = (k.h_low, k.h_high)
        self.f2_bounds = (k.f_low**2, k.f_high**2)
        self.hf_bounds = (k.h_low / k.f_high**2, k.h_high / k.f_low**2)
        self.f2inv_bounds = (1.0 / k.f_high**2, 1.0 / k.f_low**2)
        self.ratio_bounds = (k.h_low / k.h_high, k.h_high / k.h_low)
        self.hf_ratio = (self.hf_bounds[0] / self.hf_bounds[1], self.hf_bounds[1] / self.hf_bounds[0])
        self.sqdt = math.sqrt(cfg.dt)
        self.h_is_sq = getattr(cs.h, "kind", None) == "squared" and _same_function(cs.h.base, cs.f)

    def _estimate(self, xs, weights, psi_vals_list, bounds_list):
        """Conditional fields at the particles, one array per ``psi``.

        Binning returns ``(idx, per-bin fields)`` so callers can gather
        lazily; kernel regression returns ``(None, per-particle fields)``.
        """
        est = self.cfg.estimator
        lo, hi = float(xs.min()), float(xs.max())
        width = hi - lo if hi > lo else 1.0
        if est.kind == "binning":
            nb = est.n_bins
            if weights is None and len(psi_vals_list) <= 2:
                pad = list(psi_vals_list) + [psi_vals_list[0]] * (2 - len(psi_vals_list))
                idx, cnt, sa, sb = bin_sums(xs, lo, nb / width, nb, pad[0], pad[1])
                sums = (sa, sb)[: len(psi_vals_list)]
                G = [_clamp(ratio_from_sums(cnt, cnt, s_, est.min_count), b) for s_, b in zip(sums, bounds_list)]
                return idx, G
            idx = np.minimum(((xs - lo) * (nb / width)).astype(np.intp), nb - 1)
            G = [_clamp(binned_ratio(idx, nb, weights, pv, est.min_count), b) for pv, b in zip(psi_vals_list, bounds_list)]
            return idx, G
        grid = np.linspace(lo, lo + width, est.grid_size)
        bw = est.bandwidth if est.bandwidth is not None else default_bandwidth(xs)
        if not bw > 0:
            bw = width
        out = []
        for pv, b in zip(psi_vals_list, bounds_list):
            G = _clamp(1.0 / kernel_regression(xs, pv, grid, bw, weights), b)
            out.append(uniform_interp(xs, lo, grid[1] - grid[0], G))
        return None, out

    def _at_particles(self, xs, weights, psi_vals_list, bounds_list):
        idx, G = self._estimate(xs, weights, psi_vals_list, bounds_list)
        return G if idx is None else [g[idx] for g in G]

    def coefficients(self, xs, ys, weights):
        """``(drift_x, diff_x, drift_y, diff_y)`` at the particles."""
        cs, mode = self.cs, self.cfg.coupling_mode
        b1x, s1x = _ev(cs.b1, xs), _ev(cs.sigma1, xs)
        b2y, s2y = _ev(cs.b2, ys), _ev(cs.sigma2, ys)
        if mode == "decoupled":
            return b1x, s1x, b2y, s2y
        if mode == "transformed":
            f_y = cs.f(ys)
            finv2 = 1.0 / (f_y * f_y)
            hf = (1.0 if self.h_is_sq else cs.h(ys) * finv2) * np.ones_like(ys)
            if self.f_const and self.h_const:
                return b1x, s1x, b2y, s2y
            G_hf, G_inv = self._at_particles(xs, weights, [hf, finv2], [self.hf_bounds, self.f2inv_bounds])
            dr = np.clip(hf * G_hf, *self.hf_ratio)
            ry = finv2 * G_inv
            return b1x * dr, s1x, b2y * ry, s2y * np.sqrt(ry)
        # mckean-vlasov / frozen-G
        need = []
        if not self.h_const:
            need.append("h")
        if not self.f_const:
            need.append("f")
        fields = {}
        if need and mode == "frozen-G":
            G_h, G_f2 = self.cfg.frozen_fields
            fields = {"h": np.asarray(G_h(xs)), "f": np.asarray(G_f2(xs))}
        f_y = cs.f(ys) if "f" in need else None
        if "h" not in need:
            h_y = None
        elif self.h_is_sq and f_y is not None:
            h_y = f_y * f_y
        else:
            h_y = cs.h(ys)
        if need and mode == "mckean-vlasov":
            vals, bnds = [], []
            if "h" in need:
                vals.append(h_y)
                bnds.append(self.h_bounds)
            if "f" in need:
                vals.append(f_y * f_y)
                bnds.append(self.f2_bounds)
            idx, G = self._estimate(xs, weights, vals, bnds)
            if idx is not None and len(need) == 2:
                dr, df = gather_factors(idx, h_y, G[0], *self.ratio_bounds, f_y, G[1])
                return b1x * dr, s1x * df, b2y, s2y
            fields = dict(zip(need, G if idx is None else [g[idx] for g in G]))
        # constant h or f: the ratio is exactly one
        dr = 1.0 if "h" not in need else np.clip(h_y * fields["h"], *self.ratio_bounds)
        df = 1.0 if "f" not in need else f_y * np.sqrt(fields["f"])
        return b1x * dr, s1x * df, b2y, s2y


def _uniform_weights(cloud):
    return None if cloud.uniform else cloud.weights


def _advance(engine, xs, ys, weights, xi, eta):
    dt, sq = engine.cfg.dt, engine.sqdt
    bx, sx, by, sy = engine.coefficients(xs, ys, weights)
    return xs + bx * dt + sx * (sq * xi), ys + by * dt + sy * (sq * eta), (bx, sx)


def step(cloud: ParticleCloud, cs: CoefficientSet, cfg: SimConfig, noise_draws, step_index=0, _engine=None):
    """Advance the cloud by one Euler step with the given ``(N, 2)`` standard normals."""
    if len(cloud) == 0:
        raise InputError("empty particle cloud")
    if not cs.validated and not cfg.allow_unvalidated:
        raise ConfigurationError("coefficient set is not validated")
    z = np.asarray(noise_draws, dtype=float).reshape(len(cloud), 2)
    engine = _engine or _Engine(cs, cfg)
    xn, yn, _ = _advance(engine, cloud.xs, cloud.ys, _uniform_weights(cloud), z[:, 0], z[:, 1])
    _check_finite(xn, yn, step_index + 1)
    return ParticleCloud(xn, yn, cloud.weights, cloud.time + cfg.dt)


def reference_decoupled_step(xs, ys, cs, dt, noise_draws):
    """Plain two-component Euler step ``X + b1 dt + sigma1 dW``, ``Y + b2 dt + sigma2 dB``."""
    z = np.asarray(noise_draws, dtype=float)
    sq = math.sqrt(dt)
    return xs + cs.b1(xs) * dt + cs.sigma1(xs) * (sq * z[:, 0]), ys + cs.b2(ys) * dt + cs.sigma2(ys) * (sq * z[:, 1])


def _check_finite(xs, ys, step_index):
    if not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise NumericalBlowupError(f"non-finite particle state at step {step_index}", step_index=step_index)


def _check_run(cs, cfg):
    if not cs.validated and not cfg.allow_unvalidated:
        raise ConfigurationError("coefficient set is not validated; set allow_unvalidated to override")
    cap = 0.01 / cs.constants.sigma_high**2
    if cfg.dt > cap * (1 + 1e-12) and not cfg.override_dt_cap:
        raise ConfigurationError(f"dt={cfg.dt} exceeds the stability cap {cap:.3g}")


def initial_cloud(cs, cfg, marginals=None):
    if cfg.init == "custom":
        return cfg.init_cloud
    m1, m2 = marginals or stationary_marginals(cs)
    u = uniforms(cfg.seed, 0, STREAM_INIT, cfg.n_particles)
    return ParticleCloud(m1.quantile(u[:, 0]), m2.quantile(u[:, 1]))


def _burn_in(cs, cfg):
    if cfg.burn_in_fraction is not None:
        return cfg.burn_in_fraction * cfg.horizon
    return 0.0 if cs.h_is_f2 and cfg.init == "product-stationary" else 0.5 * cfg.horizon


def diagnose(cloud: ParticleCloud, m1, m2, time, burn_in=0.0, hist_bins=8):
    xs, ys = cloud.xs, cloud.ys
    r2 = xs * xs + ys * ys
    n = len(cloud)
    return SnapshotDiagnostics(
        time=float(time),
        second_moment=float(r2.mean()),
        second_moment_se=float(r2.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        xy_correlation=pearson(xs, ys) if n > 1 else float("nan"),
        hist_l1=independence_l1(xs, ys, hist_bins),
        w1_x=wasserstein1(xs, m1),
        w1_y=wasserstein1(ys, m2),
        in_burn_in=bool(time < burn_in - 1e-12),
    )


def run(cs: CoefficientSet, cfg: SimConfig, record_coefficients=True):
    """Simulate ``cfg.n_steps`` Euler steps and collect snapshots with diagnostics."""
    _check_run(cs, cfg)
    marg = stationary_marginals(cs)
    cloud = initial_cloud(cs, cfg, marg)
    engine = _Engine(cs, cfg)
    snap_steps = set(cfg.snapshot_steps().tolist())
    burn = _burn_in(cs, cfg)
    xs, ys, w = cloud.xs, cloud.ys, _uniform_weights(cloud)
    snaps, diags, coeffs, times = [], [], [], []

    def record(k, coeff):
        c = ParticleCloud(xs, ys, cloud.weights, k * cfg.dt)
        snaps.append(c)
        times.append(k * cfg.dt)
        diags.append(diagnose(c, *marg, k * cfg.dt, burn, cfg.hist_bins))
        if record_coefficients:
            bx, sx = coeff
            coeffs.append((np.array(bx, dtype=float) * np.ones_like(xs), (np.asarray(sx) * np.ones_like(xs)) ** 2))

    for k in range(cfg.n_steps):
        z = noise(cfg.seed, k, STREAM_STEP, xs.size)
        xn, yn, coeff = _advance(engine, xs, ys, w, z[:, 0], z[:, 1])
        if k in snap_steps:
            record(k, coeff)
        _check_finite(xn, yn, k + 1)
        xs, ys = xn, yn
    if cfg.n_steps in snap_steps:
        bx, sx, _, _ = engine.coefficients(xs, ys, w)
        record(cfg.n_steps, (bx, sx))
    final = ParticleCloud(xs, ys, cloud.weights, cfg.horizon)
    return SimOutput(final, np.array(times), snaps, diags, cfg.coupling_mode, cfg, burn,
                     coeffs if record_coefficients else None)


def run_time_change(cs: CoefficientSet, cfg: SimConfig):
    """Independent diffusions composed with the clock ``tau_t = int_0^t f(Y_s)**2 ds``.

    Y runs on the Euler grid; X runs on its own grid of step ``dt`` and is read
    off at ``tau_t`` by linear interpolation between its bracketing nodes. The
    X-steps taken during Y-step ``k`` draw from one stream keyed by ``k``.
    """
    if not cs.h_is_f2:
        raise ConfigurationError("the time-change construction requires h = f**2")
    _check_run(cs, cfg)
    marg = stationary_marginals(cs)
    cloud = initial_cloud(cs, cfg, marg)
    dt, sq = cfg.dt, math.sqrt(cfg.dt)
    n = len(cloud)
    ys = cloud.ys.copy()
    x_cur = cloud.xs.copy()
    x_nxt = x_cur + cs.b1(x_cur) * dt + cs.sigma1(x_cur) * (sq * noise(cfg.seed, 0, STREAM_TC_PRESTEP, n, 1)[:, 0])
    m = np.zeros(n, dtype=np.int64)
    tau = np.zeros(n)
    k_max = int(math.ceil(cs.constants.f_high**2)) + 2
    dtau_min, dtau_max = np.inf, 0.0
    snap_steps = set(cfg.snapshot_steps().tolist())
    burn = cfg.burn_in_fraction * cfg.horizon if cfg.burn_in_fraction is not None else 0.0
    snaps, diags, times = [], [], []

    def x_at_tau():
        lam = np.clip(tau / dt - m, 0.0, 1.0)
        return x_cur + lam * (x_nxt - x_cur)

    def record(k):
        c = ParticleCloud(x_at_tau(), ys.copy(), cloud.weights, k * dt)
        snaps.append(c)
        times.append(k * dt)
        diags.append(diagnose(c, *marg, k * dt, burn, cfg.hist_bins))

    for k in range(cfg.n_steps):
        if k in snap_steps:
            record(k)
        f_y = cs.f(ys)
        dtau = f_y * f_y * dt
        dtau_min, dtau_max = min(dtau_min, float(dtau.min())), max(dtau_max, float(dtau.max()))
        tau = tau + dtau
        ys = ys + _ev(cs.b2, ys) * dt + _ev(cs.sigma2, ys) * (sq * noise(cfg.seed, k, STREAM_STEP, n, 1)[:, 0])
        # X nodes crossed during this step; all their draws come from one stream, particle-major
        m_new = np.maximum(np.floor(tau / dt * (1 - 1e-12)).astype(np.int64), m)
        crossed = m_new - m
        total = int(crossed.sum())
        if total:
            if crossed.max() > k_max:
                raise NumericalBlowupError(f"time change outran {k_max} substeps at step {k + 1}", step_index=k + 1)
            draws = noise(cfg.seed, k, STREAM_TC_SUB, total, 1)[:, 0]
            offset = np.cumsum(crossed) - crossed
            for c in range(int(crossed.max())):
                adv = np.flatnonzero(crossed > c)
                xa = x_nxt[adv]
                x_cur[adv] = xa
                x_nxt[adv] = xa + _ev(cs.b1, xa) * dt + _ev(cs.sigma1, xa) * (sq * draws[offset[adv] + c])
            m = m_new
        _check_finite(x_nxt, ys, k + 1)
    if cfg.n_steps in snap_steps:
        record(cfg.n_steps)
    final = ParticleCloud(x_at_tau(), ys, cloud.weights, cfg.horizon)
    extras = {"dtau_min": dtau_min, "dtau_max": dtau_max, "tau_final_mean": float(tau.mean())}
    return SimOutput(final, np.array(times), snaps, diags, "time-change", cfg, burn, None, extras)


@dataclass
class MimickReport:
    times: np.ndarray
    w1_to_system: np.ndarray
    w1_to_m1: np.ndarray
    drift_grid: np.ndarray = field(repr=False, default=None)
    drift_hat: list = field(repr=False, default=None)
    diffusion_hat: list = field(repr=False, default=None)

    def to_dict(self):
        return {"times": self.times.tolist(), "w1_to_system": self.w1_to_system.tolist(),
                "w1_to_m1": self.w1_to_m1.tolist()}


def mimick_check(output: SimOutput, cs: CoefficientSet, grid_size=201, bandwidth=None, seed=None):
    """Compare the system's X-marginals with the one-dimensional mimicking diffusion.

    The mimicking drift and squared diffusion are kernel regressions of the
    realized coefficients on X at each snapshot, used piecewise constant in
    time until the next snapshot. The mimicking SDE starts from the first
    snapshot's X values with fresh noise.
    """
    if output.coefficients is None:
        raise InputError("output carries no realized coefficients")
    cfg = output.config
    seed = cfg.seed if seed is None else seed
    lo = min(float(s.xs.min()) for s in output.snapshots)
    hi = max(float(s.xs.max()) for s in output.snapshots)
    grid = np.linspace(lo, hi, grid_size)
    gh = grid[1] - grid[0]
    b_hat, s_hat = [], []
    for snap, (bx, s2x) in zip(output.snapshots, output.coefficients):
        bw = bandwidth or default_bandwidth(snap.xs)
        b_hat.append(kernel_regression(snap.xs, bx, grid, bw, snap.weights))
        s_hat.append(np.sqrt(np.clip(kernel_regression(snap.xs, s2x, grid, bw, snap.weights), 0.0, None)))
    m1, _ = stationary_marginals(cs)
    steps = np.round(output.snapshot_times / cfg.dt).astype(int)
    x = output.snapshots[0].xs.copy()
    sq = math.sqrt(cfg.dt)
    w_sys, w_m1 = [0.0], [wasserstein1(x, m1)]
    for j in range(len(steps) - 1):
        for k in range(steps[j], steps[j + 1]):
            xi = noise(seed, k, STREAM_MIMIC, x.size, 1)[:, 0]
            x = x + uniform_interp(x, lo, gh, b_hat[j]) * cfg.dt + uniform_interp(x, lo, gh, s_hat[j]) * (sq * xi)
        _check_finite(x, x, steps[j + 1])
        target = output.snapshots[j + 1]
        w_sys.append(float(wasserstein_distance(x, target.xs, None, target.weights)))
        w_m1.append(wasserstein1(x, m1))
    return MimickReport(output.snapshot_times.copy(), np.array(w_sys), np.array(w_m1), grid, b_hat, s_hat)


def config_to_dict(cfg: SimConfig):
    d = asdict(replace(cfg, init_cloud=None, frozen_fields=None))
    d.pop("init_cloud")
    d.pop("frozen_fields")
    return d
