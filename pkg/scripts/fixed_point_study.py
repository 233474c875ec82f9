"""Grid refinement study of the Picard fixed point.

For each grid size, reports the number of linear solves, the final Picard
increment, the largest weak residual over the test dictionary and, from the
second size on, the Richardson estimate of the discretization error. For
h = f**2 it also reports the L1 distance of the back-transformed fixed point
to the product of the stationary marginals.

    python3 scripts/fixed_point_study.py --catalog general --sizes 64 128 256
"""

import argparse
import time

import numpy as np

from cmvlab.coefficients import catalog
from cmvlab.fpsolver import default_initial, picard_iterate
from cmvlab.grid import product_density, uniform_grid
from cmvlab.particlesim import stationary_marginals
from cmvlab.transform import apply_T_inverse
from cmvlab.weakform import richardson_estimate, weak_residual


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--catalog", default="general")
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--half-width", type=float, default=6.0)
    ap.add_argument("--tol", type=float, default=1e-6)
    args = ap.parse_args()

    cs = catalog(args.catalog)
    m1, m2 = stationary_marginals(cs)
    prev = None
    print(f"{'n':>5} {'solves':>6} {'last dL1':>9} {'max|res|':>9} {'richardson':>10} {'L1 prod':>9} {'secs':>6}")
    for n in args.sizes:
        x = uniform_grid(-args.half_width, args.half_width, n)
        t0 = time.perf_counter()
        q, rep = picard_iterate(cs, default_initial(x, x), tol=args.tol)
        secs = time.perf_counter() - t0
        r = weak_residual(q, cs, "transformed")
        est = richardson_estimate(r, prev[0], x[1] - x[0], prev[1]) if prev is not None else float("nan")
        l1 = float("nan")
        if cs.h_is_f2:
            l1 = apply_T_inverse(q, cs.f).l1_distance(product_density(m1, m2, x, x))
        last = rep.l1_deltas[-1] if rep.l1_deltas else float("nan")
        print(f"{n:5d} {rep.iterations:6d} {last:9.2e} {np.max(np.abs(r)):9.2e} {est:10.2e} {l1:9.2e} {secs:6.1f}")
        prev = (r, x[1] - x[0])


if __name__ == "__main__":
    main()
