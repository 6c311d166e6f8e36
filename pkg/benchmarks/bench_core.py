"""Compare the compiled kernel core against the numpy fallback.

Run with ``python3 benchmarks/bench_core.py [--repeat R] [--sizes N ...]``.
Each kernel is called with identical inputs on both backends; the table
reports the best wall time per call and the largest output difference.
"""

import argparse
import timeit

import numpy as np

from fracinv import _pycore
from fracinv.forward import PicardControls, VolterraMode
from fracinv.fraccalc import CoefficientPath, TimeGrid, l1_scale, l1_weights
from fracinv.mlf import _nterms_for, _series_coefficients

try:
    from fracinv import _core
except ImportError:  # pragma: no cover - depends on the build
    _core = None


def cases(N):
    rng = np.random.default_rng(0)
    alpha = 0.5
    logc, sign = _series_coefficients(alpha, 1.0, _nterms_for(alpha, 1.5))
    z = -rng.uniform(0, 1.5, size=4 * N)
    w = rng.uniform(size=N + 1)
    g = rng.normal(size=N + 1)

    grid = TimeGrid(1.0, N)
    sigma = CoefficientPath(grid, 1 + 0.5 * np.sin(2 * np.pi * grid.nodes))
    mu = np.pi**2 * np.arange(1, 9) ** 2
    f = np.outer(mu, 1 + grid.nodes)
    b = l1_weights(alpha, N + 1)
    c0 = l1_scale(alpha, grid.h)

    M = PicardControls().splitting(sigma.sup())
    op = VolterraMode.build(np.pi**2, sigma, np.ones(N + 1), 1.0, alpha, M)
    pic = (op.base, op.w, op.corr, op.coef, op.base.copy(), 1e-12, 1000)

    return {
        "series_eval": (z, logc, sign),
        "history_convolve": (w, g),
        "l1_march": (mu, sigma.values, f, 1.0, c0, b),
        "picard_mode": pic,
    }


def first_array(out):
    return np.asarray(out[0] if isinstance(out, tuple) else out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024])
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled core not built; nothing to compare")
        return 1
    print(f"{'kernel':<18}{'N':>6}{'python [ms]':>14}{'compiled [ms]':>15}{'speedup':>10}{'max diff':>11}")
    for N in args.sizes:
        for name, inputs in cases(N).items():
            fp, fc = getattr(_pycore, name), getattr(_core, name)
            number = max(1, 2000 // N)
            tp = min(timeit.repeat(lambda: fp(*inputs), number=number, repeat=args.repeat)) / number
            tc = min(timeit.repeat(lambda: fc(*inputs), number=number, repeat=args.repeat)) / number
            diff = float(np.max(np.abs(first_array(fp(*inputs)) - first_array(fc(*inputs)))))
            print(f"{name:<18}{N:>6}{1e3 * tp:>14.3f}{1e3 * tc:>15.3f}{tp / tc:>10.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
