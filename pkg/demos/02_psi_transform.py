"""Numeric psi-transforms and what they buy: excess 0-1 risk from excess surrogate risk."""

import numpy as np

from riskcert import loss_calc as lc

for kind in ("least_squares", "hinge", "exponential", "logistic"):
    pt = lc.psi_transform(kind)
    probe = [0.1, 0.5, 0.9]
    print(f"{kind:14s} psi at {probe}: {np.round([pt(t) for t in probe], 6)}")

# Inverting psi turns a surrogate excess risk into a classification guarantee.
pt = lc.psi_transform("logistic")
for excess in (0.001, 0.01, 0.1):
    print(f"logistic excess phi-risk {excess:>5}: excess 0-1 risk <= {lc.psi_inverse(pt, excess):.4f}")

# Truncated losses keep a floor tau = phi(T) and need the clamp level explicitly.
ml = lc.SurrogateLoss("modified_logistic", T=2.0)
print("modified logistic floor:", ml.tau, " calibrated:", lc.is_calibrated(ml, [0.2, 0.4, 0.6, 0.8]))
