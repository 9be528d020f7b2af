"""A stride-1 filter bank written out as the dense matrix it induces."""

import numpy as np

from riskcert import net_core as nc
from riskcert.suites import direct_convolution

# A single 2x2 filter sliding over a 3x4 image gives six patches.
idx = nc.sliding_index_sets((3, 4), (2, 2))
bank = nc.FilterBank(np.array([[1.0, 2.0, 3.0, 4.0]]), idx)
W = nc.induce_weight_matrix(bank, 12)
print("patches (0-based, row-major):")
print(idx)
print("induced 6x12 matrix:")
print(W.astype(int))

# The matrix-vector product is the convolution.
x = np.arange(12.0)
print("W @ x      :", W @ x)
print("direct loop:", direct_convolution(bank.weights, idx, x))

# Layer statistics used by the certificates.
specs = [nc.conv(12, idx, 2, budget=1.0), nc.dense(12, 1, budget=1.0, activation="identity")]
print("free parameters S =", nc.param_count(specs))
print("output bound for ||x|| <= 1:", nc.output_bound(specs, 1.0))
