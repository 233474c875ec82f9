"""Stationary Fokker-Planck solver with frozen conditional-expectation fields.

The transformed operator has X-diffusion ``sigma1**2 / 2``, X-drift
``b1 (h f**-2)(y) G^{h f**-2}(x)``, Y-diffusion ``sigma2**2 f**-2(y) G^{f**-2}(x) / 2``
and Y-drift ``b2 f**-2(y) G^{f**-2}(x)``. It is discretized in flux form on a
rectangle with zero-flux walls. Each face flux of ``-d(a p) + b p`` uses the
exponentially fitted (Scharfetter-Gummel) two-point formula in the variable
``u = a p``. It reduces to central differencing when the cell Peclet number is
small, is exact for one-dimensional detailed balance, and yields an M-matrix, so
the null vector is positive.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .condexp import MASS_FLOOR, exact_G_from_grid, mollify_G
from .errors import DiscretizationError, InputError, SolverError
from .grid import GridDensity2D
from .weakform import weak_residual

log = logging.getLogger(__name__)

NEG_TOL = 1e-10


def bernoulli(z):
    """``z / (exp(z) - 1)`` with the removable singularity at 0."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-8
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = z / np.expm1(np.where(small, 1.0, z))
    return np.where(small, 1.0 - 0.5 * z, out)


def _as_grid(grid):
    xg, yg = (np.asarray(g, dtype=float) for g in grid)
    for g in (xg, yg):
        d = np.diff(g)
        if g.ndim != 1 or g.size < 3 or np.any(d <= 0) or np.max(np.abs(d - d[0])) > 1e-9 * d[0]:
            raise InputError("grid axes must be uniform, increasing, with at least 3 nodes")
    return xg, yg


def _field_values(G, pts):
    v = np.asarray(G(pts), dtype=float) if callable(G) else np.broadcast_to(float(G), pts.shape)
    if np.any(~(v > 0)):
        raise InputError("conditional-expectation fields must be positive on the grid")
    return v


def build_operator(cs, G_hf2, G_f2inv, grid):
    """Sparse FP operator ``M`` with ``dp/dt = M p``; columns sum to zero.

    Unknowns are ordered as ``values.ravel()`` (x slow, y fast).
    """
    xg, yg = _as_grid(grid)
    nx, ny = xg.size, yg.size
    dx, dy = xg[1] - xg[0], yg[1] - yg[0]
    idx = np.arange(nx * ny).reshape(nx, ny)
    rows, cols, vals = [], [], []

    def add_faces(left, right, c_left, c_right, h):
        # flux J = (c_left u_left - c_right u_right) / h between two neighbours
        for r, c, v in (
            (left, left, -c_left),
            (left, right, c_right),
            (right, left, c_left),
            (right, right, -c_right),
        ):
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append((np.broadcast_to(v, r.shape) / h**2).ravel())

    # x faces
    xf = 0.5 * (xg[1:] + xg[:-1])
    a_node = 0.5 * cs.sigma1(xg) ** 2
    a_face = 0.5 * cs.sigma1(xf) ** 2
    drift = np.outer(cs.b1(xf) * _field_values(G_hf2, xf), cs.hf2inv(yg))
    z = drift / a_face[:, None] * dx
    add_faces(idx[:-1, :], idx[1:, :], bernoulli(-z) * a_node[:-1, None], bernoulli(z) * a_node[1:, None], dx)

    # y faces; the G factor cancels in the fitted exponent but not in u
    yf = 0.5 * (yg[1:] + yg[:-1])
    Ginv = _field_values(G_f2inv, xg)
    a_y = np.outer(Ginv, 0.5 * cs.sigma2(yg) ** 2 * cs.f2inv(yg))
    z = (2.0 * cs.b2(yf) / cs.sigma2(yf) ** 2 * dy)[None, :]
    add_faces(idx[:, :-1], idx[:, 1:], bernoulli(-z) * a_y[:, :-1], bernoulli(z) * a_y[:, 1:], dy)

    M = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nx * ny, nx * ny)
    )
    M.sum_duplicates()
    return M


def null_vector(M, start=None, max_iters=20, tol=1e-11):
    """Shifted inverse power iteration for the kernel of ``M``.

    Returns ``(vector normalized to unit sum, relative residual, iterations)``.
    """
    n = M.shape[0]
    scale = float(np.max(np.abs(M.diagonal())))
    shift = 1e-10 * scale
    lu = splu((M - shift * sp.identity(n, format="csc")).tocsc())
    v = np.ones(n) if start is None else np.asarray(start, dtype=float).ravel().copy()
    res = np.inf
    for k in range(1, max_iters + 1):
        v = lu.solve(v)
        s = v.sum()
        if not np.isfinite(s) or s == 0:
            raise SolverError("inverse iteration produced a non-finite iterate", residual=res)
        v = v / s
        res = float(np.linalg.norm(M @ v, 1) / (scale * np.linalg.norm(v, 1)))
        if res < tol:
            return v, res, k
    raise SolverError(f"inverse iteration did not converge in {max_iters} iterations", residual=res)


def solve_linear_fp(cs, G_hf2, G_f2inv, grid, max_iters=20, tol=1e-11, start=None):
    """Normalized nonnegative stationary density of the frozen-field operator."""
    xg, yg = _as_grid(grid)
    M = build_operator(cs, G_hf2, G_f2inv, (xg, yg))
    v, _, _ = null_vector(M, start=start, max_iters=max_iters, tol=tol)
    vals = v.reshape(xg.size, yg.size) / ((xg[1] - xg[0]) * (yg[1] - yg[0]))
    lo = vals.min()
    if lo < -NEG_TOL:
        raise DiscretizationError(f"null vector has negative entry {lo:.3e}")
    return GridDensity2D.from_unnormalized(xg, yg, np.clip(vals, 0.0, None))


@dataclass(frozen=True)
class KDiagnostics:
    fisher_information: float
    second_moment: float
    marginal_floor: dict

    def to_dict(self):
        return {
            "fisher_information": self.fisher_information,
            "second_moment": self.second_moment,
            "marginal_floor": {str(k): v for k, v in self.marginal_floor.items()},
        }


def k_diagnostics(q: GridDensity2D, radii=(1.0, 2.0, 4.0)):
    """Discrete Fisher information, second moment and marginal floors of ``q``.

    ``grad q / q`` is set to zero where ``q`` falls below the mass floor.
    """
    gx, gy = np.gradient(q.values, q.dx, q.dy)
    ok = q.values >= MASS_FLOOR
    with np.errstate(divide="ignore", invalid="ignore"):
        integrand = np.where(ok, (gx * gx + gy * gy) / np.where(ok, q.values, 1.0), 0.0)
    fisher = float(integrand.sum() * q.dx * q.dy)
    second = q.integrate(lambda X, Y: X * X + Y * Y)
    m = q.x_marginal
    floors = {}
    for R in radii:
        sel = np.abs(q.x_grid) <= R
        floors[float(R)] = float(m[sel].min()) if sel.any() else float("nan")
    return KDiagnostics(fisher, second, floors)


def bkr_bound(q: GridDensity2D, cs, G_hf2=None, G_f2inv=None):
    """Logged regularity bound ``2 / alpha**2 * int (|B|**2 + |D|**2) q`` for the transformed operator."""
    G_hf2 = exact_G_from_grid(q, cs.hf2inv) if G_hf2 is None else G_hf2
    G_f2inv = exact_G_from_grid(q, cs.f2inv) if G_f2inv is None else G_f2inv
    x, y = q.x_grid, q.y_grid
    a11 = np.broadcast_to((0.5 * cs.sigma1(x) ** 2)[:, None], q.shape)
    a22 = np.outer(G_f2inv(x), 0.5 * cs.sigma2(y) ** 2 * cs.f2inv(y))
    alpha = float(min(a11.min(), a22.min()))
    B1 = np.outer(cs.b1(x) * G_hf2(x), cs.hf2inv(y))
    B2 = np.outer(G_f2inv(x), cs.b2(y) * cs.f2inv(y))
    D1 = np.gradient(a11, q.dx, axis=0)
    D2 = np.gradient(a22, q.dy, axis=1)
    return 2.0 / alpha**2 * q.integrate(B1**2 + B2**2 + D1**2 + D2**2)


@dataclass
class PicardReport:
    iterations: int
    l1_deltas: list
    final_residual: float
    converged: bool
    tol: float
    damping: list = field(default_factory=list)
    fisher_history: list = field(default_factory=list)
    second_moment_history: list = field(default_factory=list)
    bkr_bound: float = float("nan")

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def frozen_fields(q: GridDensity2D, cs, mollify=None):
    G_hf = exact_G_from_grid(q, cs.hf2inv)
    G_inv = exact_G_from_grid(q, cs.f2inv)
    if mollify is not None:
        G_hf, G_inv = mollify_G(G_hf, mollify), mollify_G(G_inv, mollify)
    return G_hf, G_inv


def picard_iterate(cs, initial: GridDensity2D, tol=1e-6, max_iters=200, mollify=None, damping=1.0, adaptive=True):
    """Fixed-point iteration ``q <- (1 - w) q + w Phi(q)`` in the transformed variable.

    ``Phi`` solves the frozen-field problem with fields read off ``q``. When the
    fields of the new iterate are bitwise those of the previous solve, ``Phi``
    is not re-evaluated: the cached output is reused and the step counts no
    solve. ``iterations`` is the number of linear solves.
    """
    if not 0 < damping <= 1:
        raise InputError("damping must lie in (0, 1]")
    if max_iters < 0:
        raise InputError("max_iters must be nonnegative")
    grid = (initial.x_grid, initial.y_grid)
    q = initial
    deltas, omegas, fis, sms = [], [], [], []
    solves = 0
    cache = None
    w = damping
    while solves < max_iters:
        G_hf, G_inv = frozen_fields(q, cs, mollify)
        key = (G_hf.values, G_inv.values)
        if cache is not None and all(np.array_equal(a, b) for a, b in zip(key, cache[0])):
            phi = cache[1]
        else:
            phi = solve_linear_fp(cs, G_hf, G_inv, grid, start=q.values)
            cache = (key, phi)
            solves += 1
        if w < 1:
            new = GridDensity2D.from_unnormalized(q.x_grid, q.y_grid, (1 - w) * q.values + w * phi.values)
        else:
            new = phi
        deltas.append(new.l1_distance(q))
        omegas.append(w)
        kd = k_diagnostics(new)
        fis.append(kd.fisher_information)
        sms.append(kd.second_moment)
        q = new
        log.debug("picard step %d: delta %.3e (w=%.2f)", len(deltas), deltas[-1], w)
        if deltas[-1] < tol:
            break
        if adaptive and len(deltas) >= 3 and deltas[-1] > deltas[-2] > deltas[-3] and w > 0.3:
            w = max(0.3, 0.5 * w)
            log.info("picard oscillation detected, damping lowered to %.2f", w)
    converged = bool(deltas) and deltas[-1] < tol
    res = float(np.max(np.abs(weak_residual(q, cs, "transformed"))))
    report = PicardReport(solves, deltas, res, converged, tol, omegas, fis, sms, float(bkr_bound(q, cs)))
    return q, report


def default_initial(x_grid, y_grid):
    """Standard Gaussian product on the grid, a neutral starting density."""
    return GridDensity2D.from_function(lambda X, Y: np.exp(-0.5 * (X * X + Y * Y)), x_grid, y_grid)
