"""Coefficient families for the two-dimensional conditional McKean-Vlasov SDE.

The system is driven by six scalar functions ``b1, b2, sigma1, sigma2, h, f``.
Each is represented by an immutable :class:`ScalarFunction`; a
:class:`CoefficientSet` bundles them with the dissipativity / ellipticity
constants they are claimed to satisfy, and :func:`validate_assumption_a`
checks those claims on a dense grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

KINDS = (
    "affine-drift",
    "saturated-linear-drift",
    "constant",
    "smooth-bounded",
    "piecewise-smooth",
    "tabulated",
)
SHAPES = ("logistic", "tanh", "sin")

FD_STEP = 1e-5


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass(frozen=True)
class ScalarFunction:
    """One coefficient function of the SDE.

    Parameter layout per ``kind``:

    ``constant``                ``(value,)``
    ``affine-drift``            ``(slope, intercept)``
    ``saturated-linear-drift``  ``(a, k3, mu, L)``: ``-a u - k3 u**3`` with
                                ``u = x - mu`` on ``|u| <= L``, continued by its
                                tangent lines outside (exactly linear tails)
    ``smooth-bounded``          ``(base, amplitude, center, scale)`` evaluated as
                                ``base + amplitude * s((x - center) / scale)`` with
                                ``s`` given by ``shape``
    ``piecewise-smooth``        ``(slope_left, slope_right, *knots, *values)``:
                                piecewise-linear interpolant with linear tails
    ``tabulated``               ``(*xs, *values)``: linear interpolation, clamped
    """

    kind: str
    params: tuple
    shape: str = "logistic"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        self._check()

    def _check(self):
        k, p = self.kind, self.params
        if k not in KINDS:
            raise ConfigurationError(f"unknown function kind {k!r}")
        if not all(math.isfinite(v) for v in p):
            raise ConfigurationError(f"{self.label}: non-finite parameter")
        expected = {"constant": 1, "affine-drift": 2, "saturated-linear-drift": 4, "smooth-bounded": 4}
        if k in expected and len(p) != expected[k]:
            raise ConfigurationError(
                f"{self.label}: kind {k} takes {expected[k]} parameters, got {len(p)}"
            )
        if k == "saturated-linear-drift" and p[3] <= 0:
            raise ConfigurationError(f"{self.label}: saturation radius must be positive")
        if k == "smooth-bounded":
            if self.shape not in SHAPES:
                raise ConfigurationError(f"{self.label}: unknown shape {self.shape!r}")
            if p[3] <= 0:
                raise ConfigurationError(f"{self.label}: scale must be positive")
        if k in ("piecewise-smooth", "tabulated"):
            xs, _ = self._table()
            if len(xs) < 2:
                raise ConfigurationError(f"{self.label}: need at least two abscissae")
            if np.any(np.diff(xs) <= 0):
                raise ConfigurationError(f"{self.label}: abscissae must be strictly increasing")

    @property
    def label(self):
        return self.name or self.kind

    def _table(self):
        p = self.params
        if self.kind == "piecewise-smooth":
            body = p[2:]
        else:
            body = p
        if len(body) % 2:
            raise ConfigurationError(f"{self.label}: table needs matching x and value columns")
        n = len(body) // 2
        return np.asarray(body[:n]), np.asarray(body[n:])

    @property
    def has_derivative(self):
        return self.kind not in ("piecewise-smooth", "tabulated")

    @property
    def is_constant(self):
        return self.kind == "constant"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "constant":
            return np.full_like(x, p[0])
        if k == "affine-drift":
            return p[0] * x + p[1]
        if k == "saturated-linear-drift":
            a, k3, mu, L = p
            u = x - mu
            core = -a * u - k3 * u**3
            edge = -a * L - k3 * L**3
            slope = -a - 3.0 * k3 * L**2
            return np.where(
                u > L, edge + slope * (u - L), np.where(u < -L, -edge + slope * (u + L), core)
            )
        if k == "smooth-bounded":
            base, amp, c, s = p
            z = (x - c) / s
            if self.shape == "logistic":
                return base + amp * _logistic(z)
            if self.shape == "tanh":
                return base + amp * np.tanh(z)
            return base + amp * np.sin(z)
        xs, vs = self._table()
        out = np.interp(x, xs, vs)
        if k == "piecewise-smooth":
            out = np.where(x < xs[0], vs[0] + p[0] * (x - xs[0]), out)
            out = np.where(x > xs[-1], vs[-1] + p[1] * (x - xs[-1]), out)
        return out

    def derivative(self, x):
        """Analytic derivative; centered differences for kinds without one."""
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        if k == "constant":
            return np.zeros_like(x)
        if k == "affine-drift":
            return np.full_like(x, p[0])
        if k == "saturated-linear-drift":
            a, k3, mu, L = p
            u = x - mu
            return np.where(np.abs(u) > L, -a - 3.0 * k3 * L**2, -a - 3.0 * k3 * u**2)
        if k == "smooth-bounded":
            _, amp, c, s = p
            z = (x - c) / s
            if self.shape == "logistic":
                g = _logistic(z)
                return amp * g * (1.0 - g) / s
            if self.shape == "tanh":
                return amp / (s * np.cosh(z) ** 2)
            return amp * np.cos(z) / s
        return (self(x + FD_STEP) - self(x - FD_STEP)) / (2.0 * FD_STEP)

    def with_name(self, name):
        return replace(self, name=name)

    def to_dict(self):
        d = {"kind": self.kind, "params": list(self.params)}
        if self.kind == "smooth-bounded":
            d["shape"] = self.shape
        return d

    @classmethod
    def from_dict(cls, d, name=""):
        if not isinstance(d, dict) or "kind" not in d:
            raise ConfigurationError(f"function spec for {name or '?'} needs a 'kind'")
        extra = set(d) - {"kind", "params", "shape"}
        if extra:
            raise ConfigurationError(f"unknown keys in function spec {name}: {sorted(extra)}")
        return cls(d["kind"], tuple(d.get("params", ())), d.get("shape", "logistic"), name)


def constant(value, name=""):
    return ScalarFunction("constant", (value,), name=name)


def ou_drift(kappa, mu=0.0, name=""):
    """Mean-reverting drift ``-kappa (x - mu)``."""
    return ScalarFunction("affine-drift", (-kappa, kappa * mu), name=name)


def logistic(lo, hi, center=0.0, scale=1.0, name=""):
    """``lo + (hi - lo) / (1 + exp(-(x - center) / scale))``; decreasing if ``hi < lo``."""
    return ScalarFunction("smooth-bounded", (lo, hi - lo, center, scale), "logistic", name)


def tanh_bounded(mid, amplitude, center=0.0, scale=1.0, name=""):
    return ScalarFunction("smooth-bounded", (mid, amplitude, center, scale), "tanh", name)


def tabulated(xs, values, name=""):
    return ScalarFunction("tabulated", tuple(xs) + tuple(values), name=name)


def piecewise_linear(knots, values, slope_left, slope_right, name=""):
    return ScalarFunction(
        "piecewise-smooth", (slope_left, slope_right) + tuple(knots) + tuple(values), name=name
    )


def load_tabulated_csv(path, name=""):
    """Read a two-column ``x,value`` CSV (header row required)."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ConfigurationError(f"{path}: need a header row and at least two data rows")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: malformed row ({exc})") from exc
    return tabulated(data[:, 0], data[:, 1], name=name or path.stem)


class PowerProduct:
    """Pointwise product ``prod_i g_i(y) ** p_i`` of scalar functions.

    Used for the weights ``f**2``, ``f**-2`` and ``h f**-2`` that enter the
    conditional-expectation fields. Constant when every factor is.
    """

    def __init__(self, factors: Sequence[tuple[ScalarFunction, float]]):
        self.factors = tuple(factors)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        out = np.ones_like(y)
        for g, power in self.factors:
            v = g(y)
            out = out * (v * v if power == 2 else (1.0 / (v * v) if power == -2 else v**power))
        return out

    @property
    def is_constant(self):
        return all(getattr(g, "is_constant", False) for g, _ in self.factors)

    def __repr__(self):
        return " * ".join(f"{g.label}^{p:g}" for g, p in self.factors)


def psi_bounds(psi, lo, hi, n=20001):
    """Lower and upper bounds of ``psi`` on ``[lo, hi]`` by dense sampling."""
    v = psi(np.linspace(lo, hi, n))
    return float(v.min()), float(v.max())


@dataclass(frozen=True)
class AssumptionConstants:
    c: float
    C1: float
    C2: float
    sigma_low: float
    sigma_high: float
    sigma_lip: float
    f_low: float
    f_high: float
    h_low: float
    h_high: float
    f_lip: float

    def __post_init__(self):
        for name in ("c", "C1", "C2", "sigma_lip", "f_lip"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"constant {name} must be positive")
        for lo, hi in (("sigma_low", "sigma_high"), ("f_low", "f_high"), ("h_low", "h_high")):
            if not 0 < getattr(self, lo) <= getattr(self, hi):
                raise ConfigurationError(f"need 0 < {lo} <= {hi}")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class CoefficientSet:
    b1: ScalarFunction
    b2: ScalarFunction
    sigma1: ScalarFunction
    sigma2: ScalarFunction
    h: ScalarFunction
    f: ScalarFunction
    constants: AssumptionConstants
    validated: bool = False

    @property
    def f2(self):
        return PowerProduct([(self.f, 2)])

    @property
    def f2inv(self):
        return PowerProduct([(self.f, -2)])

    @property
    def hf2inv(self):
        return PowerProduct([(self.h, 1), (self.f, -2)])

    @property
    def h_is_f2(self):
        """True when ``h`` was declared as the square of ``f`` (sample check)."""
        y = np.linspace(-10, 10, 2001)
        return bool(np.allclose(self.h(y), self.f(y) ** 2, rtol=1e-12, atol=0))

    def functions(self):
        return {n: getattr(self, n) for n in ("b1", "b2", "sigma1", "sigma2", "h", "f")}

    def to_dict(self):
        d = {n: fn.to_dict() for n, fn in self.functions().items()}
        d["constants"] = self.constants.to_dict()
        return d


@dataclass(frozen=True)
class Violation:
    inequality: str
    function: str
    x: float
    lhs: float
    rhs: float

    def __str__(self):
        return f"{self.inequality} violated by {self.function} at x={self.x:.6g}: {self.lhs:.6g} vs {self.rhs:.6g}"


def _derivative(fn, x):
    if fn.has_derivative:
        return fn.derivative(x)
    return (fn(x + FD_STEP) - fn(x - FD_STEP)) / (2.0 * FD_STEP)


def _worst(name, fname, x, lhs, rhs, bad):
    if not np.any(bad):
        return []
    i = int(np.argmax(np.where(bad, lhs - rhs, -np.inf)))
    return [Violation(name, fname, float(x[i]), float(lhs[i]), float(rhs[i]))]


def validate_assumption_a(cs: CoefficientSet, check_range=(-10.0, 10.0), n_samples=20001):
    """Check every inequality of the standing assumption on a uniform grid.

    Returns a list of :class:`Violation` (one per violated inequality and
    function, carrying the worst witness). An empty list means the set passes.
    """
    if n_samples < 2:
        raise ConfigurationError("n_samples must be at least 2")
    k = cs.constants
    x = np.linspace(check_range[0], check_range[1], int(n_samples))
    out = []
    for name in ("b1", "b2"):
        b = getattr(cs, name)(x)
        out += _worst("x b(x) <= -c x^2 + C1", name, x, x * b, -k.c * x**2 + k.C1, x * b > -k.c * x**2 + k.C1)
        out += _worst("|b(x)| <= C2 (1 + |x|)", name, x, np.abs(b), k.C2 * (1 + np.abs(x)), np.abs(b) > k.C2 * (1 + np.abs(x)))
    for name in ("sigma1", "sigma2"):
        fn = getattr(cs, name)
        s = fn(x)
        out += _worst("sigma >= sigma_low", name, x, -s, np.full_like(x, -k.sigma_low), s < k.sigma_low)
        out += _worst("sigma <= sigma_high", name, x, s, np.full_like(x, k.sigma_high), s > k.sigma_high)
        ds = np.abs(_derivative(fn, x))
        out += _worst("|sigma'| <= sigma_lip", name, x, ds, np.full_like(x, k.sigma_lip), ds > k.sigma_lip)
    for name, lo, hi in (("f", k.f_low, k.f_high), ("h", k.h_low, k.h_high)):
        v = getattr(cs, name)(x)
        out += _worst(f"{name} >= {name}_low", name, x, -v, np.full_like(x, -lo), v < lo)
        out += _worst(f"{name} <= {name}_high", name, x, v, np.full_like(x, hi), v > hi)
    df = np.abs(_derivative(cs.f, x))
    out += _worst("|f'| <= f_lip", "f", x, df, np.full_like(x, k.f_lip), df > k.f_lip)
    return out


def validate(cs: CoefficientSet, check_range=(-10.0, 10.0), n_samples=20001):
    """Return ``cs`` with ``validated`` set from :func:`validate_assumption_a`."""
    report = validate_assumption_a(cs, check_range, n_samples)
    return replace(cs, validated=not report), report


# --- constants -------------------------------------------------------------

_TINY = 1e-9


def _range_bounds(fn, lo, hi):
    p = fn.params
    if fn.kind == "squared":
        blo, bhi = _range_bounds(fn.base, lo, hi)
        if blo > 0:
            return blo * blo, bhi * bhi
    if fn.kind == "constant":
        return p[0], p[0]
    if fn.kind == "smooth-bounded":
        base, amp = p[0], p[1]
        if fn.shape == "logistic":
            return min(base, base + amp), max(base, base + amp)
        return base - abs(amp), base + abs(amp)
    v = fn(np.linspace(lo, hi, 200001))
    return float(v.min()), float(v.max())


def _lipschitz(fn, lo, hi):
    p = fn.params
    if fn.kind == "constant":
        return _TINY
    if fn.kind == "smooth-bounded":
        amp, s = abs(p[1]), p[3]
        return max(amp / (4 * s) if fn.shape == "logistic" else amp / s, _TINY)
    d = np.abs(_derivative(fn, np.linspace(lo, hi, 200001)))
    return max(float(d.max()) * (1 + 1e-6), _TINY)


def _drift_constants(b, lo, hi):
    """(c, C1, C2) for a single drift; closed form for OU drifts."""
    if b.kind == "affine-drift" and b.params[0] < 0:
        kappa, icpt = -b.params[0], b.params[1]
        mu = icpt / kappa
        # C2 carries a relative slack: |b| = C2 (1 + |x|) holds with equality on one tail
        if mu == 0:
            return kappa, 0.1, kappa * (1 + 1e-9)
        return 0.5 * kappa, 0.5 * kappa * mu**2 + 0.1, kappa * max(1.0, abs(mu)) * (1 + 1e-9)
    x = np.linspace(lo, hi, 200001)
    v = b(x)
    xe = np.array([lo, hi])
    c = 0.5 * float(np.min(-(xe * b(xe)) / xe**2))
    if not c > 0:
        raise ConfigurationError(f"drift {b.label} is not dissipative on [{lo}, {hi}]")
    C1 = max(float(np.max(x * v + c * x**2)) * (1 + 1e-9), 0.0) + 0.1
    C2 = float(np.max(np.abs(v) / (1 + np.abs(x)))) * (1 + 1e-9) + _TINY
    return c, C1, C2


def default_constants(b1, b2, sigma1, sigma2, h, f, check_range=(-10.0, 10.0)):
    """Constants for the given functions: closed form where the family allows, else sampled."""
    lo, hi = check_range
    c1, C11, C21 = _drift_constants(b1, lo, hi)
    c2, C12, C22 = _drift_constants(b2, lo, hi)
    s_lo = min(_range_bounds(sigma1, lo, hi)[0], _range_bounds(sigma2, lo, hi)[0])
    s_hi = max(_range_bounds(sigma1, lo, hi)[1], _range_bounds(sigma2, lo, hi)[1])
    f_lo, f_hi = _range_bounds(f, lo, hi)
    h_lo, h_hi = _range_bounds(h, lo, hi)
    return AssumptionConstants(
        c=min(c1, c2),
        C1=max(C11, C12),
        C2=max(C21, C22),
        sigma_low=s_lo,
        sigma_high=s_hi,
        sigma_lip=max(_lipschitz(sigma1, lo, hi), _lipschitz(sigma2, lo, hi)),
        f_low=f_lo,
        f_high=f_hi,
        h_low=h_lo,
        h_high=h_hi,
        f_lip=_lipschitz(f, lo, hi),
    )


def make_coefficient_set(b1, b2, sigma1, sigma2, h, f, constants=None, check_range=(-10.0, 10.0), n_samples=20001):
    """Assemble and validate a coefficient set (constants derived if omitted)."""
    named = {}
    for nm, fn in (("b1", b1), ("b2", b2), ("sigma1", sigma1), ("sigma2", sigma2), ("h", h), ("f", f)):
        named[nm] = fn if fn.name else fn.with_name(nm)
    if constants is None:
        constants = default_constants(**named, check_range=check_range)
    cs = CoefficientSet(constants=constants, **named)
    cs, _ = validate(cs, check_range, n_samples)
    return cs


class SquaredFunction:
    """``g**2`` for a base function ``g``; used to declare ``h = f**2`` exactly."""

    kind = "squared"

    def __init__(self, base: ScalarFunction, name="h"):
        self.base = base
        self.name = name
        self.params = base.params
        self.shape = base.shape

    @property
    def label(self):
        return self.name or "squared"

    def __call__(self, x):
        v = self.base(x)
        return v * v

    def derivative(self, x):
        return 2.0 * self.base(x) * self.base.derivative(x)

    @property
    def has_derivative(self):
        return self.base.has_derivative

    @property
    def is_constant(self):
        return self.base.is_constant

    def with_name(self, name):
        return SquaredFunction(self.base, name)

    def to_dict(self):
        return {"kind": "squared", "of": self.base.to_dict()}

    def __eq__(self, other):
        return isinstance(other, SquaredFunction) and other.base == self.base

    def __hash__(self):
        return hash(("squared", self.base))

    def __repr__(self):
        return f"SquaredFunction({self.base!r})"


def function_from_dict(d, name=""):
    """Parse a function spec, including ``{"kind": "squared", "of": {...}}``."""
    if isinstance(d, dict) and d.get("kind") == "squared":
        extra = set(d) - {"kind", "of"}
        if extra or "of" not in d:
            raise ConfigurationError(f"squared spec for {name} needs exactly an 'of' entry")
        return SquaredFunction(ScalarFunction.from_dict(d["of"], name=f"{name}.base"), name)
    return ScalarFunction.from_dict(d, name)


def catalog(name: str, **kw) -> CoefficientSet:
    """Curated coefficient sets satisfying the standing assumption.

    ``ou``             OU drifts, constant diffusions, ``f = h = 1`` (decoupled)
    ``ou-const-f``     as ``ou`` with constants ``f = f0``, ``h = h0``
    ``independence``   OU drifts, logistic ``f`` and ``h = f**2``
    ``general``        OU drifts, logistic ``f`` and a decreasing logistic ``h``
    ``tanh-vol``       OU drifts, ``sigma = a + b tanh``, logistic ``f``, ``h = f**2``
    ``cubic``          saturated cubic drift for X, logistic ``f``, ``h = f**2``
    """
    kappa1 = kw.get("kappa1", 1.0)
    kappa2 = kw.get("kappa2", 1.0)
    s1 = kw.get("sigma1", math.sqrt(2.0))
    s2 = kw.get("sigma2", math.sqrt(2.0))
    b1 = ou_drift(kappa1, kw.get("mu1", 0.0))
    b2 = ou_drift(kappa2, kw.get("mu2", 0.0))
    sig1, sig2 = constant(s1), constant(s2)
    f_lo, f_hi = kw.get("f_lo", 1.0), kw.get("f_hi", 2.0)
    f = logistic(f_lo, f_hi, kw.get("f_center", 0.0), kw.get("f_scale", 1.0))
    if name == "ou":
        return make_coefficient_set(b1, b2, sig1, sig2, constant(1.0), constant(1.0))
    if name == "ou-const-f":
        return make_coefficient_set(b1, b2, sig1, sig2, constant(kw.get("h0", 1.0)), constant(kw.get("f0", 1.0)))
    if name == "independence":
        return make_coefficient_set(b1, b2, sig1, sig2, SquaredFunction(f), f)
    if name == "general":
        h = logistic(kw.get("h_hi", 3.0), kw.get("h_lo", 0.5), kw.get("h_center", 0.0), kw.get("h_scale", 1.0))
        return make_coefficient_set(b1, b2, sig1, sig2, h, f)
    if name == "tanh-vol":
        sig1 = tanh_bounded(kw.get("sigma_mid", 1.2), kw.get("sigma_amp", 0.3), 0.0, kw.get("sigma_scale", 1.0))
        return make_coefficient_set(b1, b2, sig1, sig2, SquaredFunction(f), f)
    if name == "cubic":
        b1 = ScalarFunction("saturated-linear-drift", (kw.get("a", 0.5), kw.get("k3", 0.5), 0.0, kw.get("L", 2.0)))
        return make_coefficient_set(b1, b2, sig1, sig2, SquaredFunction(f), f)
    raise ConfigurationError(f"unknown catalog entry {name!r}")


CATALOG_NAMES = ("ou", "ou-const-f", "independence", "general", "tanh-vol", "cubic")
