"""Closed-form capacity bounds next to their empirical counterparts on a tiny class."""

import math

import numpy as np

from riskcert import complexity as cx
from riskcert import net_core as nc

specs = [nc.dense(1, 1, budget=1.0, activation="relu")]
sampler = cx.network_class_sampler(specs)
grid = np.linspace(-1, 1, 64)
for eps in (0.05, 0.1, 0.2):
    pk = cx.empirical_packing(sampler, grid, eps, budget=3000)
    bound = cx.cover_bound_dense(1, 1, 1.0, 1.0, 1.0, eps)
    print(f"eps={eps}: log packing(2 eps) = {math.log(pk.count):.3f} <= log cover bound = {bound:.3f}")

X = np.random.default_rng(0).uniform(-1, 1, size=(200, 1))
est = cx.empirical_rademacher(sampler, X, num_sigma=500, num_candidates=500)
S, B = nc.param_count(specs), nc.output_bound(specs, 1.0)
print(f"Rademacher: Monte Carlo {est.value:.4f} +- {est.stderr:.4f}, closed form {cx.rademacher_bound(S, 1, B, 200):.4f}")

eb = cx.estimation_bound(cx.ComplexityInputs(S=100, L=16, B=1.0, n=10_000, delta=0.01, B_phi=1.0))
print(f"estimation bound: sup deviation {eb.sup_dev:.5f}, ERM gap {eb.erm_gap:.5f}")
