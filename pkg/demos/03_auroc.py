"""
Imbalanced AUROC maximization on synthetic Gaussian data
========================================================

2000 samples in R^20 with 10% positives, split 9:1, dealt to four workers on a
ring.  Each method runs with the default hyperparameters and we report the
test AUROC of the network-average linear classifier.
"""

from decomp.algorithms import HyperParams, run
from decomp.problems import bayes_auroc, make_auroc, make_gaussian_auroc_data
from decomp.topology import build_ring

data = make_gaussian_auroc_data(2000, 20, positive_ratio=0.1, separation=3.0, seed=0)
train, test = data.split(0.9, seed=0)
print(f"train {len(train)}  test {len(test)}  positive ratio {train.positive_ratio:.2f}")
print(f"best achievable AUROC: {bayes_auroc(3.0):.4f}")

inst = make_auroc(train, rho=0.1, minibatch=32, K=4, seed=0)
W = build_ring(4)

for algorithm in ("gt", "gt-m", "gp", "dsgda"):
    trace = run(inst, W, HyperParams(), algorithm, 1000, metrics_every=250, test_data=test)
    curve = "  ".join(f"{rec.auroc:.4f}" for rec in trace)
    print(f"{algorithm:6s} {curve}")
