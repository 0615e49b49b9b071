"""Synchronous per-iteration updates for the decentralized compositional GDA methods.

Four variants share one update skeleton:

``gp``
    gossip on (x, y) with momentum (u, v) and a moving-average inner
    estimate h.
``gt``
    gradient tracking on the momenta (p, q) and on the inner estimate (r);
    outer gradients are evaluated at r.
``gt-m``
    tracking on the momenta only; outer gradients evaluated at h.
``dsgda``
    ``gp`` with the inner moving average replaced by the fresh sample
    (``alpha * eta`` pinned to 1), i.e. the naive chained gradient.

Worker states are stacked row-wise into (K, d) arrays.  Every round reads
iteration-t values only and commits iteration t+1 for all workers at once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import metrics
from .rng import NoiseStreams
from .topology import MixingMatrix, mix

__all__ = [
    "ALGORITHMS",
    "HyperParams",
    "WorkerState",
    "SwarmState",
    "DivergenceError",
    "Trace",
    "init",
    "step",
    "step_gp",
    "step_gt",
    "step_gt_m",
    "step_dsgda",
    "run",
]

ALGORITHMS = ("gp", "gt", "gt-m", "dsgda")
_TRACKS_MOMENTUM = {"gp": False, "gt": True, "gt-m": True, "dsgda": False}
_TRACKS_INNER = {"gp": False, "gt": True, "gt-m": False, "dsgda": False}


class DivergenceError(FloatingPointError):
    """A state entry became non-finite."""

    def __init__(self, iteration, worker, field_name):
        super().__init__(f"non-finite {field_name} at iteration {iteration} on worker {worker}")
        self.iteration = iteration
        self.worker = worker
        self.field_name = field_name


@dataclass(frozen=True)
class HyperParams:
    """Step sizes and rates; defaults are the hyperparameters of the AUROC experiments."""

    eta: float = 0.1
    gamma_x: float = 0.99
    gamma_y: float = 0.99
    beta_x: float = 9.9
    beta_y: float = 9.9
    alpha: float = 9.0

    def check(self):
        """Raise ``ValueError`` unless every rate lies in the admissible range."""
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        for name in ("gamma_x", "gamma_y", "beta_x", "beta_y", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("alpha", "beta_x", "beta_y"):
            prod = getattr(self, name) * self.eta
            if not 0 < prod < 1:
                raise ValueError(f"{name} * eta must lie in (0, 1), got {prod:g}")
        return self


@dataclass(frozen=True)
class WorkerState:
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray | None = None
    q: np.ndarray | None = None
    r: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    v_prev: np.ndarray | None = None
    h_prev: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class SwarmState:
    """All workers' state at iteration ``t``; each field is a (K, d) array.

    ``p``, ``q`` exist for ``gt`` and ``gt-m``, ``r`` only for ``gt``.  The
    ``*_prev`` fields hold the iteration t-1 values (``None`` at t = 0).
    """

    algorithm: str
    t: int
    x: np.ndarray
    y: np.ndarray
    h: np.ndarray
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray | None = None
    q: np.ndarray | None = None
    r: np.ndarray | None = None
    u_prev: np.ndarray | None = None
    v_prev: np.ndarray | None = None
    h_prev: np.ndarray | None = None

    FIELDS = ("x", "y", "h", "u", "v", "p", "q", "r", "u_prev", "v_prev", "h_prev")

    @property
    def K(self):
        return self.x.shape[0]

    def worker(self, k) -> WorkerState:
        return WorkerState(**{name: None if getattr(self, name) is None else getattr(self, name)[k] for name in self.FIELDS})

    def tracked(self):
        """Names of the per-worker quantities present in this state (consensus columns)."""
        return [name for name in ("x", "y", "h", "u", "v", "p", "q", "r") if getattr(self, name) is not None]

    def mean(self, name):
        return getattr(self, name).mean(axis=0)

    def equals(self, other) -> bool:
        """Bitwise equality of every array field."""
        for name in self.FIELDS:
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return self.t == other.t


def _check_algorithm(algorithm):
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def _local_gradients(instance, k, x, y, at, key):
    """Worker k's stochastic compositional gradient and dual gradient, outer level evaluated at ``at``."""
    J = instance.inner_jacobian(k, x, key)
    grad_g, grad_y = instance.outer_grads(k, at, y, key)
    return J.T @ grad_g, grad_y


def init(instance, W: MixingMatrix, hp: HyperParams, algorithm: str, x0=None, y0=None, seed=0, shared_noise=False) -> SwarmState:
    """Common starting point plus one fresh inner sample and gradient per worker."""
    _check_algorithm(algorithm)
    if W.K != instance.K:
        raise ValueError(f"mixing matrix has K={W.K}, instance has K={instance.K}")
    x0 = np.zeros(instance.d1) if x0 is None else np.asarray(x0, dtype=float)
    y0 = np.zeros(instance.d2) if y0 is None else np.asarray(y0, dtype=float)
    if x0.shape != (instance.d1,) or y0.shape != (instance.d2,):
        raise ValueError(f"x0, y0 must have shapes ({instance.d1},), ({instance.d2},)")
    streams = NoiseStreams(seed, shared_noise)
    K = instance.K
    x = np.tile(x0, (K, 1))
    y = np.tile(y0, (K, 1))
    h = np.empty((K, instance.d0))
    u = np.empty((K, instance.d1))
    v = np.empty((K, instance.d2))
    for k in range(K):
        key = streams.key(k, 0)
        h[k] = instance.inner_value(k, x[k], key)
        u[k], v[k] = _local_gradients(instance, k, x[k], y[k], h[k], key)
    state = SwarmState(algorithm, 0, x, y, h, u, v)
    if _TRACKS_MOMENTUM[algorithm]:
        # zero predecessors: p_0 = W p_{-1} + u_0 - u_{-1} = u_0
        state = replace(state, p=u.copy(), q=v.copy())
    if _TRACKS_INNER[algorithm]:
        state = replace(state, r=h.copy())
    return state


def _advance(state: SwarmState, instance, W, hp: HyperParams, streams: NoiseStreams, inner_rate) -> SwarmState:
    algorithm = state.algorithm
    track_m = _TRACKS_MOMENTUM[algorithm]
    track_r = _TRACKS_INNER[algorithm]
    eta = hp.eta
    t_next = state.t + 1

    x_tilde = mix(W, state.x) - hp.gamma_x * (state.p if track_m else state.u)
    x_new = state.x + eta * (x_tilde - state.x)
    y_tilde = mix(W, state.y) + hp.gamma_y * (state.q if track_m else state.v)
    y_new = state.y + eta * (y_tilde - state.y)

    keys = [streams.key(k, t_next) for k in range(state.K)]
    h_new = np.empty_like(state.h)
    for k in range(state.K):
        h_new[k] = (1.0 - inner_rate) * state.h[k] + inner_rate * instance.inner_value(k, x_new[k], keys[k])

    r_new = None
    at = h_new
    if track_r:
        # (W r - h_old) + h_new: with K = 1 this is h_new bit-for-bit
        r_new = (mix(W, state.r) - state.h) + h_new
        at = r_new

    bx = hp.beta_x * eta
    by = hp.beta_y * eta
    u_new = np.empty_like(state.u)
    v_new = np.empty_like(state.v)
    for k in range(state.K):
        gx, gy = _local_gradients(instance, k, x_new[k], y_new[k], at[k], keys[k])
        u_new[k] = (1.0 - bx) * state.u[k] + bx * gx
        v_new[k] = (1.0 - by) * state.v[k] + by * gy

    p_new = q_new = None
    if track_m:
        p_new = (mix(W, state.p) - state.u) + u_new
        q_new = (mix(W, state.q) - state.v) + v_new

    return SwarmState(
        algorithm,
        t_next,
        x_new,
        y_new,
        h_new,
        u_new,
        v_new,
        p=p_new,
        q=q_new,
        r=r_new,
        u_prev=state.u,
        v_prev=state.v,
        h_prev=state.h,
    )


def _expect(state, algorithm):
    if state.algorithm != algorithm:
        raise ValueError(f"state is tagged {state.algorithm!r}, expected {algorithm!r}")


def step_gp(state, instance, W, hp, streams):
    """Gossip round: mix (x, y), step along (u, v), refresh h, u, v at the new point."""
    _expect(state, "gp")
    return _advance(state, instance, W, hp, streams, hp.alpha * hp.eta)


def step_gt(state, instance, W, hp, streams):
    """Gradient-tracking round: x, y follow the tracked momenta (p, q); gradients use the tracked inner value r."""
    _expect(state, "gt")
    return _advance(state, instance, W, hp, streams, hp.alpha * hp.eta)


def step_gt_m(state, instance, W, hp, streams):
    _expect(state, "gt-m")
    return _advance(state, instance, W, hp, streams, hp.alpha * hp.eta)


def step_dsgda(state, instance, W, hp, streams):
    _expect(state, "dsgda")
    return _advance(state, instance, W, hp, streams, 1.0)


_STEPS = {"gp": step_gp, "gt": step_gt, "gt-m": step_gt_m, "dsgda": step_dsgda}


def step(state, instance, W, hp, streams):
    """Dispatch on the state's algorithm tag."""
    return _STEPS[state.algorithm](state, instance, W, hp, streams)


def _check_finite(state):
    for name in state.tracked():
        arr = getattr(state, name)
        bad = ~np.all(np.isfinite(arr), axis=1)
        if bad.any():
            raise DivergenceError(state.t, int(np.flatnonzero(bad)[0]), name)


class Trace(list):
    """List of :class:`~decomp.metrics.TraceRecord` plus the final swarm state."""

    final_state: SwarmState | None = None


def run(
    instance,
    W: MixingMatrix,
    hp: HyperParams,
    algorithm: str,
    T: int,
    seed: int = 0,
    metrics_every: int = 10,
    *,
    x0=None,
    y0=None,
    shared_noise: bool = False,
    test_data=None,
    check_hyperparams: bool = True,
) -> Trace:
    """Initialise, iterate ``T`` rounds, and record diagnostics.

    Records are taken at t = 0, every ``metrics_every`` iterations, and at
    t = T.  The output is a deterministic function of the inputs apart from
    the ``wall_ms`` column.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if metrics_every < 1:
        raise ValueError(f"metrics_every must be >= 1, got {metrics_every}")
    if check_hyperparams:
        hp.check()
    streams = NoiseStreams(seed, shared_noise)
    start = time.perf_counter()
    state = init(instance, W, hp, algorithm, x0, y0, seed, shared_noise)
    _check_finite(state)
    trace = Trace()

    def record():
        wall_ms = (time.perf_counter() - start) * 1e3
        trace.append(metrics.make_record(state, instance, wall_ms, test_data))

    record()
    step_fn = _STEPS[algorithm]
    while state.t < T:
        state = step_fn(state, instance, W, hp, streams)
        _check_finite(state)
        if state.t % metrics_every == 0 or state.t == T:
            record()
    trace.final_state = state
    return trace
