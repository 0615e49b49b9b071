"""Hand-checkable single-step reference for the gossip and tracking updates.

A two-worker, one-dimensional quadratic instance with noise off.  The
reference recursion below is written in exact rational arithmetic with
scalars only, independently of the vectorised implementation, so that
:func:`check` compares two separate derivations of the same numbers.
"""

from __future__ import annotations

from fractions import Fraction as Fr

import numpy as np

from .algorithms import HyperParams, init, step
from .problems import QuadraticProblem
from .rng import NoiseStreams
from .topology import build_from_weights

__all__ = ["WEIGHTS", "PARAMS", "HYPER", "X0", "Y0", "instance", "mixing_matrix", "hyperparams", "reference", "check"]

WEIGHTS = ((Fr("0.6"), Fr("0.4")), (Fr("0.4"), Fr("0.6")))
# per worker: A, a, B, b, c
PARAMS = (
    (Fr(2), Fr(1), Fr(1), Fr("0.5"), Fr("0.25")),
    (Fr(1), Fr(-1), Fr(1), Fr("-0.5"), Fr(0)),
)
MU = Fr(1)
X0 = Fr(1)
Y0 = Fr("0.5")
HYPER = dict(eta=Fr("0.5"), gamma_x=Fr("0.5"), gamma_y=Fr("0.25"), beta_x=Fr(1), beta_y=Fr(1), alpha=Fr(1))
FIELDS = {"gp": ("x", "y", "h", "u", "v"), "gt": ("x", "y", "h", "u", "v", "p", "q", "r")}


def instance() -> QuadraticProblem:
    cols = list(zip(*PARAMS))
    A, a, B, b, c = (np.array([float(v) for v in col]) for col in cols)
    return QuadraticProblem(A[:, None, None], a[:, None], B[:, None, None], b[:, None], c[:, None], mu=float(MU))


def mixing_matrix():
    return build_from_weights(np.array([[float(w) for w in row] for row in WEIGHTS]))


def hyperparams() -> HyperParams:
    return HyperParams(**{k: float(v) for k, v in HYPER.items()})


def _mix(vals):
    return [sum(w * v for w, v in zip(row, vals)) for row in WEIGHTS]


def reference(algorithm="gp", steps=1):
    """Exact per-worker values after ``steps`` rounds, as Fractions."""
    if algorithm not in FIELDS:
        raise ValueError(f"reference covers 'gp' and 'gt', got {algorithm!r}")
    hp = HYPER
    eta = hp["eta"]
    g = lambda k, x: PARAMS[k][0] * x + PARAMS[k][1]  # noqa: E731
    grad_x = lambda k, y: PARAMS[k][0] * (PARAMS[k][2] * y + PARAMS[k][4])  # noqa: E731
    grad_y = lambda k, h, y: PARAMS[k][2] * h - PARAMS[k][3] - MU * y  # noqa: E731

    x = [X0, X0]
    y = [Y0, Y0]
    h = [g(k, x[k]) for k in range(2)]
    u = [grad_x(k, y[k]) for k in range(2)]
    v = [grad_y(k, h[k], y[k]) for k in range(2)]
    p, q, r = list(u), list(v), list(h)
    tracking = algorithm == "gt"
    for _ in range(steps):
        dx = p if tracking else u
        dy = q if tracking else v
        mx, my = _mix(x), _mix(y)
        x_new = [x[k] + eta * (mx[k] - hp["gamma_x"] * dx[k] - x[k]) for k in range(2)]
        y_new = [y[k] + eta * (my[k] + hp["gamma_y"] * dy[k] - y[k]) for k in range(2)]
        ae = hp["alpha"] * eta
        h_new = [(1 - ae) * h[k] + ae * g(k, x_new[k]) for k in range(2)]
        at = h_new
        if tracking:
            mr = _mix(r)
            r = [mr[k] - h[k] + h_new[k] for k in range(2)]
            at = r
        bx, by = hp["beta_x"] * eta, hp["beta_y"] * eta
        u_new = [(1 - bx) * u[k] + bx * grad_x(k, y_new[k]) for k in range(2)]
        v_new = [(1 - by) * v[k] + by * grad_y(k, at[k], y_new[k]) for k in range(2)]
        if tracking:
            mp, mq = _mix(p), _mix(q)
            p = [mp[k] - u[k] + u_new[k] for k in range(2)]
            q = [mq[k] - v[k] + v_new[k] for k in range(2)]
        x, y, h, u, v = x_new, y_new, h_new, u_new, v_new
    values = dict(x=x, y=y, h=h, u=u, v=v, p=p, q=q, r=r)
    return {name: values[name] for name in FIELDS[algorithm]}


def check(algorithm="gp", steps=1):
    """Run the implementation on the golden instance.

    Returns ``(max_abs_error, expected, actual)`` with ``expected`` holding
    Fractions and ``actual`` floats, keyed by field name.
    """
    inst, W, hp = instance(), mixing_matrix(), hyperparams()
    state = init(inst, W, hp, algorithm, x0=[float(X0)], y0=[float(Y0)])
    streams = NoiseStreams(0)
    for _ in range(steps):
        state = step(state, inst, W, hp, streams)
    expected = reference(algorithm, steps)
    actual = {name: [float(val) for val in getattr(state, name)[:, 0]] for name in expected}
    err = max(abs(float(e) - a) for name in expected for e, a in zip(expected[name], actual[name]))
    return err, expected, actual
