"""Compare the compiled simplex kernels with the numpy fallback.

Times each kernel on random inputs of a few sizes, then a full simplex solve
of a relaxed LP with each backend (the backend is chosen per subprocess via
OCCRELAX_PURE_PYTHON).

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np
from scipy import sparse

from occrelax import _pykernels as py

try:
    from occrelax import _ckernels as cy
except ImportError:
    cy = None


def kernel_inputs(m, n, seed=0):
    rng = np.random.default_rng(seed)
    A = sparse.random(m, n, density=0.05, random_state=rng, format="csc")
    return {
        "indptr": A.indptr.astype(np.int64), "indices": A.indices.astype(np.int64),
        "data": A.data.astype(float), "cost": rng.normal(size=n), "y": rng.normal(size=m),
        "eligible": (rng.random(n) < 0.8).astype(np.uint8), "xb": rng.random(m),
        "d": rng.normal(size=m), "basis": rng.permutation(n)[:m].astype(np.int64),
        "binv": rng.normal(size=(m, m)),
        # unit pivot with tiny off-pivot entries: repeated in-place updates stay bounded
        "eta_d": np.concatenate([[1.0], 1e-12 * rng.normal(size=m - 1)]),
    }


def kernel_calls(mod, a):
    return {
        "dantzig_price": lambda: mod.dantzig_price(a["indptr"], a["indices"], a["data"], a["cost"], a["y"],
                                                   a["eligible"], 1e-9),
        "bland_price": lambda: mod.bland_price(a["indptr"], a["indices"], a["data"], a["cost"], a["y"],
                                               a["eligible"], 1e-9),
        "harris_ratio": lambda: mod.harris_ratio(a["xb"], a["d"], a["basis"], 1e-9, 1e-9),
        "ratio_test": lambda: mod.ratio_test(a["xb"], a["d"], a["basis"], 1e-9),
        "eta_update": lambda: mod.eta_update(a["binv"], a["eta_d"], 0),
    }


SOLVE_SNIPPET = """
import time
from occrelax import BACKEND, builtin, grid_for, assemble, solve, TestBasis
p = builtin("gap-eq")
g = grid_for(p, nx=24, ny=5, nz=5)
lp = assemble(p, g, TestBasis(g))
t = time.perf_counter()
for _ in range({repeat}):
    s = solve(lp, method="simplex")
print(BACKEND, (time.perf_counter() - t) / {repeat}, s.iterations, lp.n_rows, lp.n_vars, repr(s.objective))
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if cy is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':15s} {'size':>11s} {'python us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for m, n in ((50, 200), (200, 2000), (500, 10000)):
        a = kernel_inputs(m, n)
        for name in kernel_calls(py, a):
            times = []
            for mod in (py, cy):
                f = kernel_calls(mod, kernel_inputs(m, n))[name]
                number = 200 if m < 500 else 20
                times.append(min(timeit.repeat(f, number=number, repeat=args.repeat)) / number * 1e6)
            print(f"{name:15s} {f'{m}x{n}':>11s} {times[0]:10.1f} {times[1]:10.1f} {times[0] / times[1]:8.1f}")
    print()
    print(f"{'full solve':15s} {'backend':>8s} {'seconds':>9s} {'pivots':>7s} {'rows x cols':>12s}  objective")
    for pure in ("1", "0"):
        env = dict(os.environ, OCCRELAX_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(repeat=args.repeat)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"{'gap-eq 24x5x5':15s} {out[0]:>8s} {float(out[1]):9.3f} {out[2]:>7s} {out[3] + 'x' + out[4]:>12s}  {out[5]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
