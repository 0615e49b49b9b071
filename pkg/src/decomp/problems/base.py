"""Common machinery for compositional minimax instances.

An instance describes ``min_x max_y (1/K) sum_k f_k(g_k(x), y)``.  Subclasses
supply exact per-worker oracles (``g``, ``jac``, ``f``, ``f_grads``) and their
stochastic counterparts; everything that only needs exact oracles (the
objective, the best response, Phi and its gradient) lives here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = ["ProblemConstants", "ProblemInstance", "BestResponse", "PhiGrad"]

ASCENT_STEPS = 200
ASCENT_TOL = 1e-8


@dataclass(frozen=True)
class ProblemConstants:
    """Smoothness, moment and noise constants of an instance.

    Noise entries are norm-level bounds, ``E||noise||^2 <= sigma^2``, not
    per-coordinate standard deviations.
    """

    L_f: float
    L_g: float
    C_f: float
    C_g: float
    sigma_f: float
    sigma_g: float
    sigma_g_prime: float
    mu: float

    def __post_init__(self):
        for name in ("L_f", "L_g", "C_f", "C_g", "mu"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        for name in ("sigma_f", "sigma_g", "sigma_g_prime"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.mu > self.L_f:
            raise ValueError(f"mu={self.mu} exceeds L_f={self.L_f}")


class BestResponse(NamedTuple):
    y: np.ndarray
    converged: bool


class PhiGrad(NamedTuple):
    phi: float
    grad: np.ndarray
    converged: bool


class ProblemInstance:
    """Base class; see module docstring.

    Stochastic oracles take ``noise``: ``None`` for an exact evaluation, or a
    :data:`decomp.rng.NoiseKey` addressing the random draw.  Equal keys give
    equal outputs.
    """

    K: int
    d0: int
    d1: int
    d2: int
    constants: ProblemConstants

    # -- exact per-worker oracles (subclasses) ---------------------------------
    def g(self, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jac(self, k: int, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def f(self, k: int, h: np.ndarray, y: np.ndarray) -> float:
        raise NotImplementedError

    def f_grads(self, k: int, h: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    # -- stochastic oracles (subclasses) ---------------------------------------
    def inner_value(self, k, x, noise=None) -> np.ndarray:
        raise NotImplementedError

    def inner_jacobian(self, k, x, noise=None) -> np.ndarray:
        raise NotImplementedError

    def outer_grads(self, k, h, y, noise=None) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    # -- validation helpers ----------------------------------------------------
    def _check_worker(self, k):
        if not 0 <= k < self.K:
            raise IndexError(f"worker index {k} out of range for K={self.K}")

    @staticmethod
    def _vec(v, dim, name):
        v = np.asarray(v, dtype=float)
        if v.shape != (dim,):
            raise ValueError(f"{name} must have shape ({dim},), got {v.shape}")
        return v

    # -- deterministic verification oracles -----------------------------------
    def deterministic_objective(self, x, y) -> float:
        """F(x, y) = (1/K) sum_k f_k(g_k(x), y), noise free."""
        x = self._vec(x, self.d1, "x")
        y = self._vec(y, self.d2, "y")
        return float(np.mean([self.f(k, self.g(k, x), y) for k in range(self.K)]))

    def grad_y(self, x, y) -> np.ndarray:
        x = self._vec(x, self.d1, "x")
        y = self._vec(y, self.d2, "y")
        return np.mean([self.f_grads(k, self.g(k, x), y)[1] for k in range(self.K)], axis=0)

    def grad_x(self, x, y) -> np.ndarray:
        """Exact chain-rule gradient of F in x."""
        x = self._vec(x, self.d1, "x")
        y = self._vec(y, self.d2, "y")
        total = np.zeros(self.d1)
        for k in range(self.K):
            total += self.jac(k, x).T @ self.f_grads(k, self.g(k, x), y)[0]
        return total / self.K

    def _closed_form_best_response(self, x):
        """Return argmax_y F(x, y) in closed form, or None if unavailable."""
        return None

    def best_response(self, x, method: str = "auto") -> BestResponse:
        """argmax_y F(x, y).

        ``method="auto"`` uses the family's closed form when it has one;
        ``"ascent"`` forces 200 exact gradient-ascent steps of size ``1/L_f``
        and reports ``converged=False`` if ``||grad_y F|| > 1e-8`` afterwards.
        """
        x = self._vec(x, self.d1, "x")
        if method not in ("auto", "ascent"):
            raise ValueError(f"unknown best-response method {method!r}")
        if method == "auto":
            y = self._closed_form_best_response(x)
            if y is not None:
                return BestResponse(y, True)
        step = 1.0 / self.constants.L_f
        y = np.zeros(self.d2)
        gk = [self.g(k, x) for k in range(self.K)]
        grad = None
        for _ in range(ASCENT_STEPS):
            grad = np.mean([self.f_grads(k, gk[k], y)[1] for k in range(self.K)], axis=0)
            if np.linalg.norm(grad) <= ASCENT_TOL:
                break
            y = y + step * grad
        grad = np.mean([self.f_grads(k, gk[k], y)[1] for k in range(self.K)], axis=0)
        return BestResponse(y, bool(np.linalg.norm(grad) <= ASCENT_TOL))

    def phi_and_grad(self, x, method: str = "auto") -> PhiGrad:
        """Phi(x) = F(x, y*(x)) and its gradient via Danskin's theorem."""
        x = self._vec(x, self.d1, "x")
        y, ok = self.best_response(x, method)
        return PhiGrad(self.deterministic_objective(x, y), self.grad_x(x, y), ok)

    def chained_gradient(self, k, x, y, noise=None) -> np.ndarray:
        """One stochastic compositional gradient ``J_k(x; xi)^T grad_g f_k(g_k(x; xi), y; zeta)``."""
        h = self.inner_value(k, x, noise)
        grad_g, _ = self.outer_grads(k, h, y, noise)
        return self.inner_jacobian(k, x, noise).T @ grad_g
