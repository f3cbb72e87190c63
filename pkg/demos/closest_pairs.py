"""m closest pairs by recursive NNDescent against an exhaustive scan."""

import time

import numpy as np

from netrecon.bench import gaussian_instance
from netrecon.findbest import find_best, find_best_exhaustive, recall_curve


def report(name, n, m, d):
    t0 = time.perf_counter()
    fast = find_best(m, np.arange(n), d, rng=0)
    t1 = time.perf_counter()
    ref = find_best_exhaustive(m, np.arange(n), d)
    t2 = time.perf_counter()
    curve = recall_curve(ref, fast)
    print(f"{name}: N={n} m={m}  recursive {t1 - t0:.2f}s ({fast.evaluations} distances), "
          f"exhaustive {t2 - t1:.2f}s ({n * (n - 1) // 2})")
    print(f"  recall at 1/10/m: {curve[0]:.2f} {curve[min(9, m - 1)]:.2f} {curve[-1]:.2f}")
    print(f"  levels (t, N_t, k_t, exhaustive): {fast.trace.levels}")


if __name__ == "__main__":
    pts = np.random.default_rng(1).random((2000, 2))
    report("points in the plane", 2000, 2000, lambda ii, jj: np.linalg.norm(pts[ii] - pts[jj], axis=1))
    model, _ = gaussian_instance(500, 100, seed=0)
    report("Gaussian model, empty state", 500, 500, model.oracle("exact"))
