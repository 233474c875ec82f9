"""Calibrated local stochastic volatility on synthetic call-price surfaces.

The log-price ``X = log S`` follows the engine's X equation with
``b1(x) = -sigma_dup(e^x)**2 / 2``, ``sigma1(x) = sigma_dup(e^x)`` and ``h = f**2``,
so the drift is ``-Z**2 sigma_dup**2 / (2 E[Z**2 | X])`` and the diffusion
``Z sigma_dup / sqrt(E[Z**2 | X])`` with ``Z = f(Y)``. Rates and dividends are zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded
from scipy.stats import norm

from .coefficients import (
    CoefficientSet,
    ScalarFunction,
    SquaredFunction,
    make_coefficient_set,
    piecewise_linear,
    tabulated,
    validate_assumption_a,
)
from .condexp import ParticleCloud
from .errors import ArbitrageError, ConfigurationError, InputError
from .particlesim import STREAM_INIT, SimConfig, run, stationary_marginals, uniforms

ARB_TOL = 1e-10
TAIL_EPS = 0.01
FLATTEN_WIDTH = 3.0


def _axis(v, name):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2 or np.any(np.diff(v) <= 0) or v[0] <= 0:
        raise InputError(f"{name} must be an increasing positive vector")
    return v


@dataclass(frozen=True)
class CallSurface:
    """Undiscounted call prices ``prices[i, j] = C(maturities[i], strikes[j])``."""

    maturities: np.ndarray
    strikes: np.ndarray
    prices: np.ndarray
    spot: float

    def __post_init__(self):
        T = _axis(self.maturities, "maturities")
        K = _axis(self.strikes, "strikes")
        P = np.asarray(self.prices, dtype=float)
        if P.shape != (T.size, K.size):
            raise InputError(f"prices shape {P.shape} does not match axes ({T.size}, {K.size})")
        if not self.spot > 0:
            raise InputError("spot must be positive")
        if np.any(~np.isfinite(P)) or np.any(P < -ARB_TOL):
            raise InputError("prices must be finite and nonnegative")
        object.__setattr__(self, "maturities", T)
        object.__setattr__(self, "strikes", K)
        object.__setattr__(self, "prices", P)
        object.__setattr__(self, "spot", float(self.spot))

    def check_arbitrage(self):
        """Raise :class:`ArbitrageError` at the first cell that breaks the static bounds."""
        P, K = self.prices, self.strikes
        dec = np.diff(P, axis=1)
        bad = np.argwhere(dec > ARB_TOL)
        if bad.size:
            i, j = bad[0]
            raise ArbitrageError(
                f"call price increases in strike at maturity {self.maturities[i]:.6g}, strike {K[j + 1]:.6g}",
                cell=(int(i), int(j + 1)),
            )
        # discrete convexity on a possibly nonuniform strike axis
        s = dec / np.diff(K)
        conv = np.diff(s, axis=1) * 0.5 * (K[2:] - K[:-2])
        bad = np.argwhere(conv < -ARB_TOL)
        if bad.size:
            i, j = bad[0]
            raise ArbitrageError(
                f"butterfly arbitrage at maturity {self.maturities[i]:.6g}, strike {K[j + 1]:.6g} "
                f"(second difference {conv[i, j]:.3e})",
                cell=(int(i), int(j + 1)),
            )
        cal = np.argwhere(np.diff(P, axis=0) < -ARB_TOL)
        if cal.size:
            i, j = cal[0]
            raise ArbitrageError(
                f"calendar arbitrage at maturity {self.maturities[i + 1]:.6g}, strike {K[j]:.6g}",
                cell=(int(i + 1), int(j)),
            )

    def to_csv(self, path):
        _write_matrix(path, {"spot": self.spot}, self.maturities, self.strikes, self.prices)

    @classmethod
    def from_csv(cls, path):
        meta, T, K, P = _read_matrix(path)
        if "spot" not in meta:
            raise InputError(f"{path}: missing spot in the metadata line")
        return cls(T, K, P, meta["spot"])


@dataclass(frozen=True)
class LocalVolSurface:
    """Dupire local volatility on the surface grid.

    ``clamped`` marks cells moved to ``[vol_min, vol_max]``; ``flattening`` is
    the log-price window ``(x_lo, x_hi)`` outside which ``sigma**2`` is held
    constant and the drift gains a linear dissipative tail.
    """

    maturities: np.ndarray
    strikes: np.ndarray
    values: np.ndarray
    spot: float
    vol_min: float
    vol_max: float
    flattening: tuple
    clamped: np.ndarray = field(default=None, compare=False)

    def __post_init__(self):
        V = np.asarray(self.values, dtype=float)
        if np.any(V < self.vol_min - 1e-15) or np.any(V > self.vol_max + 1e-15):
            raise InputError("local vol values outside [vol_min, vol_max]")
        object.__setattr__(self, "values", V)
        if self.clamped is None:
            object.__setattr__(self, "clamped", np.zeros(V.shape, dtype=bool))

    def slice_index(self, horizon):
        """Row of the maturity nearest ``horizon`` (the time-independent estimate)."""
        return int(np.argmin(np.abs(self.maturities - horizon)))

    def _window(self, i):
        x = np.log(self.strikes)
        lo, hi = self.flattening
        sel = (x >= lo) & (x <= hi)
        if sel.sum() < 2:
            raise ConfigurationError("flattening window holds fewer than two strikes")
        return x[sel], self.values[i, sel]

    def sigma_function(self, horizon, name="sigma1"):
        """``x -> sigma_dup(e^x)`` on the slice, constant outside the window."""
        x, v = self._window(self.slice_index(horizon))
        return tabulated(x, v, name=name)

    def drift_function(self, horizon, eps=TAIL_EPS, name="b1"):
        """``-sigma**2 / 2`` on the window, continued by slope ``-eps`` tails."""
        x, v = self._window(self.slice_index(horizon))
        return piecewise_linear(x, -0.5 * v * v, -eps, -eps, name=name)

    def to_csv(self, path):
        meta = {
            "spot": self.spot,
            "vol_min": self.vol_min,
            "vol_max": self.vol_max,
            "x_lo": self.flattening[0],
            "x_hi": self.flattening[1],
        }
        _write_matrix(path, meta, self.maturities, self.strikes, self.values)

    @classmethod
    def from_csv(cls, path):
        meta, T, K, V = _read_matrix(path)
        need = ("spot", "vol_min", "vol_max", "x_lo", "x_hi")
        missing = [k for k in need if k not in meta]
        if missing:
            raise InputError(f"{path}: metadata lacks {missing}")
        return cls(T, K, V, meta["spot"], meta["vol_min"], meta["vol_max"], (meta["x_lo"], meta["x_hi"]))


def _write_matrix(path, meta, rows, cols, values):
    with open(path, "w", newline="") as fh:
        fh.write("# " + ",".join(f"{k}={v!r}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh)
        w.writerow(["maturity\\strike"] + [repr(float(c)) for c in cols])
        for r, vals in zip(rows, values):
            w.writerow([repr(float(r))] + [repr(float(v)) for v in vals])


def _read_matrix(path):
    path = Path(path)
    with path.open(newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise InputError(f"{path}: expected a '# key=value' metadata line")
    meta = {}
    for item in lines[0][1:].split(","):
        if item.strip():
            k, _, v = item.partition("=")
            meta[k.strip()] = float(v)
    rows = list(csv.reader(lines[1:]))
    try:
        cols = np.array([float(c) for c in rows[0][1:]])
        body = np.array([[float(v) for v in r] for r in rows[1:] if r])
    except (ValueError, IndexError) as exc:
        raise InputError(f"{path}: malformed matrix ({exc})") from exc
    return meta, body[:, 0], cols, body[:, 1:]


# --- pricing ---------------------------------------------------------------


def bs_call(spot, strike, maturity, vol):
    """Black-Scholes call with zero rate and dividends (vectorised over strike and maturity)."""
    K = np.asarray(strike, dtype=float)
    T = np.asarray(maturity, dtype=float)
    sd = vol * np.sqrt(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(spot / K) + 0.5 * sd * sd) / sd
    price = spot * norm.cdf(d1) - K * norm.cdf(d1 - sd)
    return np.where(K <= 0, spot, np.where(sd > 0, price, np.maximum(spot - K, 0.0)))


def black_scholes_surface(spot, vol, maturities, strikes):
    T = _axis(maturities, "maturities")
    K = _axis(strikes, "strikes")
    return CallSurface(T, K, bs_call(spot, K[None, :], T[:, None], vol), spot)


def cev_local_vol(spot, level=0.2, power=-0.25):
    """``K -> level * (K / spot)**power``."""
    return lambda K: level * (np.asarray(K, dtype=float) / spot) ** power


def forward_pde_surface(local_vol, spot, maturities, strikes, k_max=None, substeps=4, rannacher=4):
    """Call prices from the forward equation ``C_T = sigma(K)**2 K**2 C_KK / 2``.

    Crank-Nicolson in maturity on a uniform strike grid that contains
    ``strikes`` and extends from 0 to ``k_max``, with ``rannacher`` implicit
    half steps after the payoff kink. ``maturities`` must be uniform multiples
    of the time step ``dT = spacing / substeps``.
    """
    T = _axis(maturities, "maturities")
    K = _axis(strikes, "strikes")
    dK = K[1] - K[0]
    if np.max(np.abs(np.diff(K) - dK)) > 1e-9 * dK:
        raise InputError("strikes must be uniform")
    dT = (T[1] - T[0]) / substeps if T.size > 1 else T[0] / substeps
    if T.size > 1 and np.max(np.abs(np.diff(T) - (T[1] - T[0]))) > 1e-9:
        raise InputError("maturities must be uniform")
    marks = np.round(T / dT).astype(int)
    if np.max(np.abs(marks * dT - T)) > 1e-9:
        raise InputError("first maturity must be a multiple of the time step")
    k_max = 5.0 * max(spot, K[-1]) if k_max is None else k_max
    # nodes K[0] - j0 dK, ..., with the lowest one in [0, dK)
    j0 = int(math.floor(K[0] / dK + 1e-9))
    n = j0 + int(math.ceil((k_max - K[0]) / dK)) + 1
    grid = np.maximum(K[0] + dK * np.arange(-j0, n - j0), 0.0)
    C = np.maximum(spot - grid, 0.0)
    a = 0.5 * local_vol(grid[1:-1]) ** 2 * grid[1:-1] ** 2 / dK**2

    def banded(theta, dt):
        ab = np.zeros((3, n))
        ab[1] = 1.0
        ab[0, 2:] = -theta * dt * a
        ab[1, 1:-1] = 1.0 + 2.0 * theta * dt * a
        ab[2, :-2] = -theta * dt * a
        return ab

    def step(C, theta, dt):
        rhs = C.copy()
        lap = C[2:] - 2.0 * C[1:-1] + C[:-2]
        rhs[1:-1] += (1.0 - theta) * dt * a * lap
        rhs[0], rhs[-1] = spot - grid[0], 0.0
        return solve_banded((1, 1), banded(theta, dt), rhs)

    out = np.empty((T.size, K.size))
    done, nxt = 0, 0
    for m in range(1, marks[-1] + 1):
        if m <= rannacher // 2:
            C = step(step(C, 1.0, 0.5 * dT), 1.0, 0.5 * dT)
        else:
            C = step(C, 0.5, dT)
        done = m
        while nxt < T.size and marks[nxt] == done:
            out[nxt] = C[j0 : j0 + K.size]
            nxt += 1
    return CallSurface(T, K, np.maximum(out, 0.0), spot)


# --- Dupire ----------------------------------------------------------------


def dupire_from_surface(s: CallSurface, vol_min=0.01, vol_max=2.0, flatten_width=FLATTEN_WIDTH):
    """Local volatility ``sqrt(2 C_T / (K**2 C_KK))`` on interior strikes.

    ``C_T`` uses forward differences in maturity and ``C_KK`` central
    differences in strike, averaged over the same two maturities so the ratio
    is centred in time (the last row reuses the previous one). Edge strikes
    copy their neighbours. Squares outside ``[vol_min**2, vol_max**2]`` are clamped
    and flagged. The flattening radius is ``flatten_width`` times the at-the-money
    vol times ``sqrt(max maturity)``, centred on ``log spot``.
    """
    if not 0 < vol_min < vol_max:
        raise InputError("need 0 < vol_min < vol_max")
    s.check_arbitrage()
    P, T, K = s.prices, s.maturities, s.strikes
    dT = np.diff(T)
    Ct = np.empty_like(P)
    Ct[:-1] = np.diff(P, axis=0) / dT[:, None]
    Ct[-1] = Ct[-2]
    hl, hr = K[1:-1] - K[:-2], K[2:] - K[1:-1]
    Ckk = 2.0 * (hl * P[:, 2:] - (hl + hr) * P[:, 1:-1] + hr * P[:, :-2]) / (hl * hr * (hl + hr))
    Ckk[:-1] = 0.5 * (Ckk[:-1] + Ckk[1:])
    Ckk[-1] = Ckk[-2]
    with np.errstate(divide="ignore", invalid="ignore"):
        var = 2.0 * Ct[:, 1:-1] / (K[1:-1] ** 2 * Ckk)
    var = np.concatenate([var[:, :1], var, var[:, -1:]], axis=1)
    lo, hi = vol_min**2, vol_max**2
    clamped = ~np.isfinite(var) | (var < lo) | (var > hi)
    var = np.clip(np.nan_to_num(var, nan=lo, posinf=hi, neginf=lo), lo, hi)
    vals = np.sqrt(var)
    j = int(np.argmin(np.abs(K - s.spot)))
    atm = float(np.median(vals[:, j]))
    radius = flatten_width * atm * math.sqrt(T[-1])
    x0 = math.log(s.spot)
    return LocalVolSurface(T, K, vals, s.spot, vol_min, vol_max, (x0 - radius, x0 + radius), clamped)


def interior_mask(lv: LocalVolSurface, moneyness=(0.8, 1.25), drop_maturities=1):
    """Cells away from the grid edges and the clamped set, within a moneyness band."""
    m = lv.strikes / lv.spot
    mask = np.zeros(lv.values.shape, dtype=bool)
    mask[drop_maturities : lv.values.shape[0] - drop_maturities, 1:-1] = True
    mask &= ((m >= moneyness[0]) & (m <= moneyness[1]))[None, :]
    return mask & ~lv.clamped


# --- calibrated simulation -------------------------------------------------


def calibrated_coefficients(lv: LocalVolSurface, vol_process: CoefficientSet, horizon, eps=TAIL_EPS):
    """Coefficient set of the calibrated log-price SDE on the slice nearest ``horizon``."""
    b1 = lv.drift_function(horizon, eps)
    s1 = lv.sigma_function(horizon)
    f = vol_process.f
    if not isinstance(f, ScalarFunction):
        raise ConfigurationError("vol_process.f must be a plain function")
    cs = make_coefficient_set(b1, vol_process.b2, s1, vol_process.sigma2, SquaredFunction(f), f)
    if not cs.validated:
        report = validate_assumption_a(cs)
        raise ConfigurationError("calibrated coefficients fail the standing assumption: " + "; ".join(map(str, report)))
    return cs


def simulate_calibrated_lsv(lv: LocalVolSurface, vol_process: CoefficientSet, cfg: SimConfig, eps=TAIL_EPS):
    """Run the engine on the calibrated set with every particle started at ``log spot``.

    Y starts from its stationary law (stream ``STREAM_INIT``). A custom
    ``cfg.init_cloud`` is used unchanged.
    """
    cs = calibrated_coefficients(lv, vol_process, cfg.horizon, eps)
    if cfg.init != "custom":
        _, m2 = stationary_marginals(cs)
        u = uniforms(cfg.seed, 0, STREAM_INIT, cfg.n_particles, 1)[:, 0]
        xs = np.full(cfg.n_particles, math.log(lv.spot))
        cfg = replace(cfg, init="custom", init_cloud=ParticleCloud(xs, m2.quantile(u)))
    if cfg.burn_in_fraction is None:
        cfg = replace(cfg, burn_in_fraction=0.0)
    return run(cs, cfg, record_coefficients=False), cs


@dataclass(frozen=True)
class RepriceReport:
    strikes: np.ndarray
    prices: np.ndarray
    std_errors: np.ndarray
    reference: np.ndarray = None

    @property
    def z_scores(self):
        if self.reference is None:
            return None
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.prices - self.reference) / self.std_errors

    def to_csv(self, path):
        ref = self.reference if self.reference is not None else np.full_like(self.prices, np.nan)
        z = self.z_scores if self.reference is not None else np.full_like(self.prices, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["strike", "price", "std_error", "reference", "z_score"])
            for row in zip(self.strikes, self.prices, self.std_errors, ref, z):
                w.writerow([repr(float(v)) for v in row])


def reprice(cloud: ParticleCloud, strikes, spot=1.0, reference=None):
    """Weighted Monte Carlo call prices ``sum w max(exp(x) - K, 0)`` with standard errors.

    ``spot`` is accepted for reporting symmetry; strikes are absolute.
    """
    K = np.atleast_1d(np.asarray(strikes, dtype=float))
    if len(cloud) == 0:
        raise InputError("empty cloud")
    w = np.asarray(cloud.weights, dtype=float)
    w = w / w.sum()
    S = np.exp(cloud.xs)
    pay = np.maximum(S[:, None] - K[None, :], 0.0)
    price = w @ pay
    n_eff = 1.0 / np.sum(w * w)
    var = w @ (pay - price) ** 2
    se = np.sqrt(var * n_eff / max(n_eff - 1.0, 1.0) / n_eff) if n_eff > 1 else np.zeros_like(price)
    ref = None if reference is None else np.asarray(reference, dtype=float)
    return RepriceReport(K, price, se, ref)
