"""Low intrinsic dimension: projections, reduced dimension, and the certificate gain."""

import numpy as np

from riskcert import certifier as ct
from riskcert import synthdata as sd

task = sd.make_manifold_task(d=64, d_M=2, rho=0.005, seed=0)
pts = task.sampler(np.random.default_rng(0), 2000)
chk = sd.projection_distortion_check(pts, d_eps=8, eps=0.5)
print(f"projection 64 -> 8 accepted after {chk.attempts} attempt(s), ratios in "
      f"[{chk.min_ratio:.3f}, {chk.max_ratio:.3f}]")

for d, d_M, eps, c in [(20, 2, 0.5, 1.0), (20, 2, 0.9, 0.5), (400, 1, 0.9, 0.5)]:
    print(f"d={d:3d} d_M={d_M} eps={eps} c={c}: d_eps = {ct.manifold_dim(d, d_M, eps, c)}")

req = ct.SizingRequest("least_squares", n=4096, d=20, alpha=1.0, lam=0.7,
                       manifold=ct.ManifoldSpec(d_M=2, eps_jl=0.9, c_jl=0.5, rho=0.002))
amb = ct.assemble_bound(req)
man = ct.assemble_bound_manifold(req, M=amb.M, N=amb.N)
print(f"AppError ambient {amb.app_error:.2f} vs manifold {man.app_error:.2f} (d_eff {man.d_eff}); "
      f"rho_max {man.rho_max:.4g}; flags {man.flags}")
