"""Compositional AUROC maximization with a linear classifier.

The minimization variable is ``theta_bar = [theta, theta_hat_1, theta_hat_2]``
and the maximization variable is the scalar ``theta_tilde``.  The inner map is
one cross-entropy gradient step on the classifier weights,

    g(theta_bar) = theta_bar - rho * [grad_ce(theta), 0, 0],

and the outer level is the square-loss AUROC surrogate evaluated at the
stepped weights.  Stochastic oracles draw a minibatch (with replacement) from
the worker's shard; the inner and outer levels of one oracle call share that
minibatch.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit
from scipy.stats import norm, rankdata

from ..rng import BATCH, generator
from .base import ProblemConstants, ProblemInstance

__all__ = [
    "AurocSample",
    "AurocDataset",
    "AurocProblem",
    "make_auroc",
    "auroc_score",
    "make_gaussian_auroc_data",
    "bayes_auroc",
    "logistic_loss",
]

# max |sigma''(z)| for the logistic sigmoid
_SIGMOID_CURVATURE = 1.0 / (6.0 * np.sqrt(3.0))
_TINY = 1e-12


@dataclass(frozen=True)
class AurocSample:
    a: np.ndarray
    b: int

    def __post_init__(self):
        if self.b not in (1, -1):
            raise ValueError(f"label must be +1 or -1, got {self.b}")


@dataclass(frozen=True, eq=False)
class AurocDataset:
    """Features ``(n, d)`` with labels in {+1, -1}."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.labels)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ValueError(f"features must be (n, d) and labels (n,), got {X.shape} and {y.shape}")
        if X.shape[0] == 0:
            raise ValueError("dataset is empty")
        if not np.all(np.isin(y, (1, -1))):
            raise ValueError("labels must be exactly +1 or -1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y.astype(int))

    @classmethod
    def from_samples(cls, samples):
        samples = list(samples)
        return cls(np.array([s.a for s in samples], dtype=float), np.array([s.b for s in samples]))

    @classmethod
    def load_csv(cls, path):
        """One sample per line: label, then comma-separated features."""
        data = np.loadtxt(Path(path), delimiter=",", ndmin=2)
        return cls(data[:, 1:], data[:, 0].astype(int))

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def positive_ratio(self):
        return float(np.mean(self.labels == 1))

    def samples(self):
        return [AurocSample(a, int(b)) for a, b in zip(self.features, self.labels)]

    def subset(self, idx):
        return AurocDataset(self.features[idx], self.labels[idx])

    def split(self, train_fraction=0.9, seed=0):
        """Seeded stratified train/test split; both parts keep both classes."""
        rng = np.random.default_rng(seed)
        train, test = [], []
        for label in (1, -1):
            idx = rng.permutation(np.flatnonzero(self.labels == label))
            n_train = int(round(train_fraction * idx.size))
            train.append(idx[:n_train])
            test.append(idx[n_train:])
        return self.subset(np.sort(np.concatenate(train))), self.subset(np.sort(np.concatenate(test)))


def _require_both_classes(labels):
    n_pos = int(np.sum(labels == 1))
    if n_pos == 0 or n_pos == labels.size:
        raise ValueError("dataset must contain both classes")


def logistic_loss(theta, features, labels):
    """Mean cross-entropy ``log(1 + exp(-b theta.a))``."""
    return float(-np.mean(log_expit(labels * (features @ theta))))


def auroc_score(theta, dataset: AurocDataset) -> float:
    """Wilcoxon-Mann-Whitney estimate of P(score(pos) > score(neg)), ties count 1/2."""
    _require_both_classes(dataset.labels)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (dataset.dim,):
        raise ValueError(f"theta must have shape ({dataset.dim},), got {theta.shape}")
    scores = dataset.features @ theta
    pos = dataset.labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    ranks = rankdata(scores)
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def make_gaussian_auroc_data(n, d, positive_ratio=0.1, separation=3.0, seed=0) -> AurocDataset:
    """Two unit-covariance Gaussians in R^d whose means are ``separation`` apart."""
    if not 0 < positive_ratio < 1:
        raise ValueError("positive_ratio must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n_pos = int(round(positive_ratio * n))
    if n_pos == 0 or n_pos == n:
        raise ValueError("dataset would contain a single class")
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    X = rng.standard_normal((n, d))
    labels = -np.ones(n, dtype=int)
    labels[:n_pos] = 1
    X[:n_pos] += separation * direction
    perm = rng.permutation(n)
    return AurocDataset(X[perm], labels[perm])


def bayes_auroc(separation) -> float:
    """Best achievable AUROC for :func:`make_gaussian_auroc_data`: Phi(separation / sqrt 2)."""
    return float(norm.cdf(separation / np.sqrt(2.0)))


@lru_cache(maxsize=256)
def _batch_indices(noise, n, m):
    return generator(noise, BATCH).integers(0, n, size=m)


class AurocProblem(ProblemInstance):
    """Per-worker shards of a linear-classifier compositional AUROC problem.

    ``p`` is the positive ratio of the whole training set, shared by all
    workers.
    """

    family = "auroc"

    def __init__(self, shards, p, rho, minibatch, radius=10.0):
        if not shards:
            raise ValueError("need at least one shard")
        if not 0 < p < 1:
            raise ValueError(f"p must lie in (0, 1), got {p}")
        if rho < 0:
            raise ValueError(f"rho must be >= 0, got {rho}")
        if minibatch < 1:
            raise ValueError(f"minibatch must be >= 1, got {minibatch}")
        self.shards = [AurocDataset(s.features, s.labels) for s in shards]
        self.K = len(self.shards)
        self.dim = self.shards[0].dim
        if any(s.dim != self.dim for s in self.shards):
            raise ValueError("all shards must share the feature dimension")
        self.d0 = self.d1 = self.dim + 2
        self.d2 = 1
        self.p = float(p)
        self.rho = float(rho)
        self.minibatch = int(minibatch)
        self.radius = float(radius)
        self.constants = self._constants()

    def _constants(self):
        X = np.concatenate([s.features for s in self.shards])
        y = np.concatenate([s.labels for s in self.shards])
        R = float(np.linalg.norm(X, axis=1).max())
        p, Rd, m = self.p, self.radius, self.minibatch
        mu = 2.0 * p * (1.0 - p)
        # L_f: largest spectral norm of a per-sample outer Hessian in (theta, t1, t2, theta_tilde)
        pos = (y == 1).astype(float)
        neg = 1.0 - pos
        n, d = X.shape
        H = np.zeros((n, d + 3, d + 3))
        curv = 2.0 * (1.0 - p) * pos + 2.0 * p * neg
        H[:, :d, :d] = curv[:, None, None] * X[:, :, None] * X[:, None, :]
        H[:, :d, d] = H[:, d, :d] = -2.0 * (1.0 - p) * pos[:, None] * X
        H[:, d, d] = 2.0 * (1.0 - p) * pos
        H[:, :d, d + 1] = H[:, d + 1, :d] = -2.0 * p * neg[:, None] * X
        H[:, d + 1, d + 1] = 2.0 * p * neg
        H[:, :d, d + 2] = H[:, d + 2, :d] = 2.0 * (p * neg - (1.0 - p) * pos)[:, None] * X
        H[:, d + 2, d + 2] = -mu
        L_f = float(np.abs(np.linalg.eigvalsh(H)).max())
        # C_f over the box |t1|, |t2|, |theta_tilde| <= radius, ||theta|| <= radius
        ds = 2.0 * (R * Rd + Rd) + 2.0 * (1.0 + Rd)
        C_f = max(ds * R + 2.0 * (R * Rd + Rd), mu * Rd + 2.0 * R * Rd)
        C_g = max(1.0, self.rho * R**2 / 4.0 - 1.0)
        return ProblemConstants(
            L_f=max(L_f, mu),
            L_g=max(self.rho * _SIGMOID_CURVATURE * R**3, _TINY),
            C_f=C_f,
            C_g=C_g,
            sigma_f=C_f / np.sqrt(m),
            sigma_g=self.rho * R / np.sqrt(m),
            sigma_g_prime=self.rho * R**2 / (4.0 * np.sqrt(m)),
            mu=mu,
        )

    # -- data access -------------------------------------------------------------
    def _batch(self, k, noise):
        shard = self.shards[k]
        if noise is None:
            return shard.features, shard.labels
        idx = _batch_indices(noise, len(shard), self.minibatch)
        return shard.features[idx], shard.labels[idx]

    # -- inner level ---------------------------------------------------------------
    def _ce_grad(self, theta, X, y):
        return X.T @ (-y * expit(-y * (X @ theta))) / X.shape[0]

    def _ce_hessian(self, theta, X, y):
        z = X @ theta
        s = expit(z) * expit(-z)
        return (X.T * s) @ X / X.shape[0]

    def _inner(self, x, X, y):
        out = x.copy()
        out[: self.dim] -= self.rho * self._ce_grad(x[: self.dim], X, y)
        return out

    def _inner_jac(self, x, X, y):
        J = np.eye(self.d1)
        J[: self.dim, : self.dim] -= self.rho * self._ce_hessian(x[: self.dim], X, y)
        return J

    # -- outer level ---------------------------------------------------------------
    def _outer_terms(self, h, y, labels, X):
        theta, t1, t2 = h[: self.dim], h[self.dim], h[self.dim + 1]
        tt = y[0]
        s = X @ theta
        pos = (labels == 1).astype(float)
        neg = 1.0 - pos
        return s, t1, t2, tt, pos, neg

    def _outer_value(self, h, y, X, labels):
        p = self.p
        s, t1, t2, tt, pos, neg = self._outer_terms(h, y, labels, X)
        L = (
            (1 - p) * (s - t1) ** 2 * pos
            + p * (s - t2) ** 2 * neg
            - p * (1 - p) * tt**2
            + 2 * (1 + tt) * (p * s * neg - (1 - p) * s * pos)
        )
        return float(L.mean())

    def _outer_grads(self, h, y, X, labels):
        p = self.p
        s, t1, t2, tt, pos, neg = self._outer_terms(h, y, labels, X)
        dLds = 2 * (1 - p) * (s - t1) * pos + 2 * p * (s - t2) * neg + 2 * (1 + tt) * (p * neg - (1 - p) * pos)
        grad_h = np.empty(self.d0)
        grad_h[: self.dim] = X.T @ dLds / X.shape[0]
        grad_h[self.dim] = np.mean(-2 * (1 - p) * (s - t1) * pos)
        grad_h[self.dim + 1] = np.mean(-2 * p * (s - t2) * neg)
        grad_y = np.array([-2 * p * (1 - p) * tt + np.mean(2 * (p * s * neg - (1 - p) * s * pos))])
        return grad_h, grad_y

    # -- exact oracles -------------------------------------------------------------
    def g(self, k, x):
        s = self.shards[k]
        return self._inner(x, s.features, s.labels)

    def jac(self, k, x):
        s = self.shards[k]
        return self._inner_jac(x, s.features, s.labels)

    def f(self, k, h, y):
        s = self.shards[k]
        return self._outer_value(h, y, s.features, s.labels)

    def f_grads(self, k, h, y):
        s = self.shards[k]
        return self._outer_grads(h, y, s.features, s.labels)

    # -- stochastic oracles --------------------------------------------------------
    def inner_value(self, k, x, noise=None):
        self._check_worker(k)
        x = self._vec(x, self.d1, "x")
        X, y = self._batch(k, noise)
        return self._inner(x, X, y)

    def inner_jacobian(self, k, x, noise=None):
        self._check_worker(k)
        x = self._vec(x, self.d1, "x")
        X, y = self._batch(k, noise)
        return self._inner_jac(x, X, y)

    def outer_grads(self, k, h, y, noise=None):
        self._check_worker(k)
        h = self._vec(h, self.d0, "h")
        y = self._vec(y, self.d2, "y")
        X, labels = self._batch(k, noise)
        return self._outer_grads(h, y, X, labels)

    def _closed_form_best_response(self, x):
        p = self.p
        total = 0.0
        for k, shard in enumerate(self.shards):
            s = shard.features @ self.g(k, x)[: self.dim]
            pos = shard.labels == 1
            total += np.mean(np.where(pos, -(1 - p) * s, p * s))
        return np.array([total / self.K / (p * (1 - p))])

    def classifier(self, x):
        """Classifier weights ``theta`` held in a minimization vector."""
        return np.asarray(x, dtype=float)[: self.dim]


def make_auroc(dataset, rho=0.1, minibatch=32, K=4, seed=0, radius=10.0) -> AurocProblem:
    """Shuffle ``dataset`` with ``seed`` and deal it round-robin to K workers."""
    if not isinstance(dataset, AurocDataset):
        dataset = AurocDataset.from_samples(dataset)
    _require_both_classes(dataset.labels)
    if K < 1 or K > len(dataset):
        raise ValueError(f"K must lie in [1, {len(dataset)}], got {K}")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    shards = [dataset.subset(perm[k::K]) for k in range(K)]
    return AurocProblem(shards, p=dataset.positive_ratio, rho=rho, minibatch=minibatch, radius=radius)
