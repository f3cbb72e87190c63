"""GCD against coordinate descent on one Gaussian instance."""

import sys

from netrecon.bench import gaussian_instance, time_to_objective
from netrecon.gcd import ReconstructionConfig, reconstruct_cd, reconstruct_gcd
from netrecon.models import log_posterior

n = int(sys.argv[1]) if len(sys.argv) > 1 else 300
lam = 0.05

m_cd, _ = gaussian_instance(n, 100, seed=0, lam=lam)
_, cd = reconstruct_cd(m_cd, max_iters=300, record_objective=True)
target = cd.objective[-1]
print(f"CD: {cd.n_iter} sweeps, {cd.iterations[-1][2]:.1f}s, objective {log_posterior(m_cd):.6g}, "
      f"converged={cd.converged}")
for kappa in (1.0, 10.0):
    m_g, _ = gaussian_instance(n, 100, seed=0, lam=lam)
    _, g = reconstruct_gcd(m_g, ReconstructionConfig(kappa=kappa, max_iters=2000, record_objective=True))
    print(f"GCD kappa={kappa:g}: {g.n_iter} iterations, {g.iterations[-1][2]:.1f}s, "
          f"objective {log_posterior(m_g):.6g}, reached CD's final objective at "
          f"{time_to_objective(g, target):.1f}s")
