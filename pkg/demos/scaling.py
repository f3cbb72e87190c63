"""FindBest runtime against N on the empty Gaussian state, M = 10.

Sizes here stop at 2^13, where the local slope is still steeper than the
asymptotic one; the acceptance run fits over 2^10..2^15.
"""

from netrecon.bench import bench_findbest_scaling

ns = [2**e for e in range(9, 14)]
rep = bench_findbest_scaling(ns, seeds=(0, 1), repeats=2)
ns, secs = rep.seconds(1.0)
for n, s in zip(ns, secs):
    print(f"N={n:6d}  {s:.3f}s")
print(f"fitted exponent {rep.exponent(1.0):.2f}, halving held: {rep.halving_holds()}")
