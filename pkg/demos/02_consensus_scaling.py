"""
Consensus error of the inner estimate: gossip vs. tracking
==========================================================

With plain gossip (gp) the workers' inner-value estimates h disagree at a
level proportional to the step size eta.  Tracking the inner value (gt) makes
the disagreement of its estimate r shrink like eta squared.  We measure both
steady-state levels on an 8-worker ring and fit log-log slopes.

Takes about two minutes.
"""

import numpy as np

from decomp.algorithms import HyperParams, run
from decomp.metrics import fit_loglog_slope, steady_state_consensus
from decomp.problems import make_quadratic
from decomp.topology import build_ring

W = build_ring(8)
etas = (0.2, 0.1, 0.05, 0.025)
seeds = range(3)
levels = {"gp": {}, "gt": {}}

for eta in etas:
    # two timescales: the dual step is ten times the primal one
    hp = HyperParams(eta=eta, gamma_x=0.1, gamma_y=1.0, beta_x=4.0, beta_y=4.0, alpha=1.0)
    for algorithm, quantity in (("gp", "h"), ("gt", "r")):
        vals = []
        for s in seeds:
            inst = make_quadratic(8, 5, 5, 5, sigma_f=0.3, sigma_g=0.3, heterogeneity=0.05, seed=100 + s)
            trace = run(inst, W, hp, algorithm, 4000, seed=s, metrics_every=10)
            vals.append(steady_state_consensus(trace, quantity, len(trace) // 5))
        levels[algorithm][eta] = float(np.mean(vals))
    print(f"eta={eta:<6} gp cons_h={levels['gp'][eta]:.3e}   gt cons_r={levels['gt'][eta]:.3e}")

for algorithm in ("gp", "gt"):
    slope, r2 = fit_loglog_slope(list(levels[algorithm].items()))
    print(f"{algorithm}: slope {slope:.2f} (r^2 {r2:.3f})")
