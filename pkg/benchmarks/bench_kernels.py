"""Compare the numba and numpy lattice kernels.

Times the fused gradient/loss kernel on lattices of increasing size, then an
end-to-end fit under each backend (the backend is fixed at import time, so
each fit runs in a fresh interpreter with ``CTMBOOST_DISABLE_NUMBA`` set).

    python benchmarks/bench_kernels.py [--repeat 20]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ctmboost import _kernels

FIT_SNIPPET = """
import time
from ctmboost.boost import BoostConfig, fit, make_grid
from ctmboost.sim import hvc_learners, simulate_hvc
from ctmboost import _kernels
data = simulate_hvc(200, 0, seed=1)
grid = make_grid(data.y)
learners = hvc_learners(grid.range)
fit(data, learners, BoostConfig(max_iterations=5), grid)  # warm-up and jit
t = time.perf_counter()
fit(data, learners, BoostConfig(max_iterations=300, step_size=0.3), grid)
print(_kernels.BACKEND, time.perf_counter() - t)
"""


def kernel_table(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for n, N in [(50, 100), (100, 200), (100, 1000), (200, 5000)]:
        H = rng.normal(size=(n, N))
        y = rng.normal(size=N)
        grid = np.linspace(-3, 3, n)
        row = [f"{n}x{N}"]
        for name in ("numpy", "numba"):
            f = getattr(_kernels, f"gradient_and_loss_{name}", None)
            if f is None:
                row.append(float("nan"))
                continue
            f(H, y, grid, "bin", "probit")
            row.append(min(timeit.repeat(lambda: f(H, y, grid, "bin", "probit"), number=1, repeat=repeat)))
        rows.append(row)
    print(f"{'lattice':>10} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, t_np, t_nb in rows:
        print(f"{label:>10} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.1f}")


def fit_table():
    for flag in ("0", "1"):
        env = dict(os.environ, CTMBOOST_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"fit N=200, 300 iterations, backend {backend:>5}: {float(secs):.2f}s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        print("numba is unavailable; only the numpy backend can be timed")
    kernel_table(args.repeat)
    fit_table()


if __name__ == "__main__":
    main()
