"""
More workers, fewer iterations
==============================

Gradient tracking on the same heterogeneous quadratic problem with K = 1, 2,
4 and 8 workers.  The step size grows with K, and we count the iterations
until the stationarity criterion first drops below 1e-2.
"""

import numpy as np

from decomp.algorithms import HyperParams, run
from decomp.problems import make_quadratic
from decomp.topology import build_complete, build_ring

target = 1e-2
for K in (1, 2, 4, 8):
    inst = make_quadratic(K, 5, 5, 5, sigma_f=0.1, sigma_g=0.1, heterogeneity=0.5, seed=7)
    W = build_ring(K) if K >= 3 else build_complete(K)
    hp = HyperParams(eta=0.025 * K, gamma_x=0.1, gamma_y=1.0, beta_x=4.0, beta_y=4.0, alpha=1.0)
    hits = []
    for s in range(3):
        trace = run(inst, W, hp, "gt", 4000, seed=s, metrics_every=10)
        hits.append(next((rec.t for rec in trace if rec.criterion <= target), np.inf))
    print(f"K={K}: median iterations to target {np.median(hits):.0f}")
