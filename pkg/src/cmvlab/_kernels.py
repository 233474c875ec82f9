"""Compiled inner loops for the particle engine's binning estimator."""

import numpy as np
from numba import njit


@njit(cache=True)
def bin_sums(xs, lo, scale, nb, psi_a, psi_b):
    """Bin index per particle plus per-bin counts and sums of two weight arrays."""
    n = xs.size
    idx = np.empty(n, np.int64)
    count = np.zeros(nb)
    sa = np.zeros(nb)
    sb = np.zeros(nb)
    for i in range(n):
        j = int((xs[i] - lo) * scale)
        if j >= nb:
            j = nb - 1
        elif j < 0:
            j = 0
        idx[i] = j
        count[j] += 1.0
        sa[j] += psi_a[i]
        sb[j] += psi_b[i]
    return idx, count, sa, sb


@njit(cache=True)
def gather_factors(idx, h_y, G_h, lo, hi, f_y, G_f):
    """Clamped drift factor ``h G_h`` and diffusion factor ``f sqrt(G_f)`` per particle."""
    n = idx.size
    dr = np.empty(n)
    df = np.empty(n)
    for i in range(n):
        j = idx[i]
        r = h_y[i] * G_h[j]
        if r < lo:
            r = lo
        elif r > hi:
            r = hi
        dr[i] = r
        df[i] = f_y[i] * np.sqrt(G_f[j])
    return dr, df
