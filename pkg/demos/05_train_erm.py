"""Budget-projected ERM on a synthetic Holder task and the resulting excess risk."""

import numpy as np

from riskcert import erm, harness
from riskcert import synthdata as sd

eta = sd.make_holder_eta(d=2, alpha=1.0, lam=0.7, seed=1)
cfg = erm.TrainConfig(lr=0.02, epochs=60, restarts=1, patience=60, seed=0)
X_test = np.random.default_rng(99).uniform(size=(50_000, 2))
for n in (256, 1024, 4096):
    ds = sd.sample_dataset(eta, n, seed=n)
    res = erm.train_erm(harness.network_specs(2, 3, {}), "least_squares", ds, cfg)
    excess, se = harness.excess_phi_risk("least_squares", res.network, eta, X_test)
    print(f"n={n:5d}: train phi-risk {res.best_risk:.4f}, held-out excess phi-risk {excess:.4f} +- {se:.4f}")
print("Bayes risk of the task:", round(sd.bayes_risk(eta)[0], 4))
