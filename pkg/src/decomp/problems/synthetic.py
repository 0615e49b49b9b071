"""Synthetic instances with a bilinear-quadratic outer level.

Both families share the outer function

    f_k(g, y) = y . (B_k g - b_k) - (mu/2) ||y||^2 + c_k . g

and differ only in the inner map: affine ``A_k x + a_k`` (quadratic family)
or ``tanh(A_k x + a_k)`` elementwise (tanh family).  Stochastic oracles add
independent zero-mean Gaussian noise to the inner value, the inner Jacobian
and both outer partials.
"""

from __future__ import annotations

import numpy as np

from ..rng import XI_JACOBIAN, XI_VALUE, ZETA, generator
from .base import ProblemConstants, ProblemInstance

__all__ = ["QuadraticProblem", "TanhProblem", "make_quadratic", "make_tanh"]

# max |d^2/dz^2 tanh(z)| = 4 / (3 sqrt 3)
_TANH_CURVATURE = 4.0 / (3.0 * np.sqrt(3.0))
# L_g of an affine map is 0; constants must stay positive
_TINY = 1e-12


class QuadraticProblem(ProblemInstance):
    """Affine inner map ``g_k(x) = A_k x + a_k``.

    Parameters are stacked over workers: ``A`` is (K, d0, d1), ``a`` (K, d0),
    ``B`` (K, d2, d0), ``b`` (K, d2), ``c`` (K, d0).  ``sigma_*`` are
    per-coordinate noise standard deviations.  ``radius`` bounds the region
    over which the gradient second moment ``C_f`` is computed, since the
    bilinear outer gradient is unbounded on the whole space.
    """

    family = "quadratic"

    def __init__(self, A, a, B, b, c, mu, sigma_f=0.0, sigma_g=0.0, sigma_g_prime=0.0, radius=10.0):
        self.A = np.array(A, dtype=float)
        self.a = np.array(a, dtype=float)
        self.B = np.array(B, dtype=float)
        self.b = np.array(b, dtype=float)
        self.c = np.array(c, dtype=float)
        self.K, self.d0, self.d1 = self.A.shape
        self.d2 = self.B.shape[1]
        expected = {
            "a": (self.K, self.d0),
            "B": (self.K, self.d2, self.d0),
            "b": (self.K, self.d2),
            "c": (self.K, self.d0),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {getattr(self, name).shape}")
        if mu <= 0:
            raise ValueError(f"mu must be > 0, got {mu}")
        if min(sigma_f, sigma_g, sigma_g_prime) < 0:
            raise ValueError("noise standard deviations must be >= 0")
        self.mu = float(mu)
        self.sigma_f = float(sigma_f)
        self.sigma_g = float(sigma_g)
        self.sigma_g_prime = float(sigma_g_prime)
        self.radius = float(radius)
        for arr in (self.A, self.a, self.B, self.b, self.c):
            arr.setflags(write=False)
        self.constants = self._constants()

    # -- constants -------------------------------------------------------------
    def _inner_radius(self, norm_A):
        return norm_A * self.radius + np.linalg.norm(self.a, axis=1).max()

    def _jacobian_norm_bound(self, norm_A):
        return norm_A

    def _constants(self):
        norm_A = np.linalg.norm(self.A, ord=2, axis=(1, 2)).max()
        norm_B = np.linalg.norm(self.B, ord=2, axis=(1, 2)).max()
        R = self.radius
        R_g = self._inner_radius(norm_A)
        bound_gg = norm_B * R + np.linalg.norm(self.c, axis=1).max()
        bound_gy = norm_B * R_g + np.linalg.norm(self.b, axis=1).max() + self.mu * R
        C_f = np.sqrt(max(bound_gg**2 + self.sigma_f**2 * self.d0, bound_gy**2 + self.sigma_f**2 * self.d2))
        C_g = self._jacobian_norm_bound(norm_A) + self.sigma_g_prime * np.sqrt(self.d0 * self.d1)
        # spectral norm of the outer Hessian [[0, B^T], [B, -mu I]]
        L_f = 0.5 * (self.mu + np.sqrt(self.mu**2 + 4.0 * norm_B**2))
        return ProblemConstants(
            L_f=float(L_f),
            L_g=float(max(self._inner_smoothness(norm_A), _TINY)),
            C_f=float(max(C_f, _TINY)),
            C_g=float(max(C_g, _TINY)),
            sigma_f=self.sigma_f * np.sqrt(max(self.d0, self.d2)),
            sigma_g=self.sigma_g * np.sqrt(self.d0),
            sigma_g_prime=self.sigma_g_prime * np.sqrt(self.d0 * self.d1),
            mu=self.mu,
        )

    def _inner_smoothness(self, norm_A):
        return 0.0

    # -- exact oracles -----------------------------------------------------------
    def g(self, k, x):
        return self.A[k] @ x + self.a[k]

    def jac(self, k, x):
        return self.A[k]

    def f(self, k, h, y):
        return float(y @ (self.B[k] @ h - self.b[k]) - 0.5 * self.mu * (y @ y) + self.c[k] @ h)

    def f_grads(self, k, h, y):
        return self.B[k].T @ y + self.c[k], self.B[k] @ h - self.b[k] - self.mu * y

    # -- stochastic oracles ------------------------------------------------------
    def inner_value(self, k, x, noise=None):
        self._check_worker(k)
        x = self._vec(x, self.d1, "x")
        out = self.g(k, x)
        if noise is not None and self.sigma_g > 0:
            out = out + self.sigma_g * generator(noise, XI_VALUE).standard_normal(self.d0)
        return out

    def inner_jacobian(self, k, x, noise=None):
        self._check_worker(k)
        x = self._vec(x, self.d1, "x")
        out = self.jac(k, x)
        if noise is not None and self.sigma_g_prime > 0:
            out = out + self.sigma_g_prime * generator(noise, XI_JACOBIAN).standard_normal((self.d0, self.d1))
        return out

    def outer_grads(self, k, h, y, noise=None):
        self._check_worker(k)
        h = self._vec(h, self.d0, "h")
        y = self._vec(y, self.d2, "y")
        grad_g, grad_y = self.f_grads(k, h, y)
        if noise is not None and self.sigma_f > 0:
            z = generator(noise, ZETA).standard_normal(self.d0 + self.d2)
            grad_g = grad_g + self.sigma_f * z[: self.d0]
            grad_y = grad_y + self.sigma_f * z[self.d0 :]
        return grad_g, grad_y

    # -- verification ------------------------------------------------------------
    def _closed_form_best_response(self, x):
        z = np.mean([self.B[k] @ self.g(k, x) - self.b[k] for k in range(self.K)], axis=0)
        return z / self.mu

    def saddle_point(self):
        """Exact saddle ``(x*, y*(x*))`` of the quadratic family.

        With ``M = mean_k B_k A_k``, ``m = mean_k (B_k a_k - b_k)`` and
        ``cbar = mean_k A_k^T c_k``, Phi(x) = ||Mx + m||^2 / (2 mu) + cbar . x
        + const, so x* solves the normal equations
        ``M^T M x = -(M^T m + mu cbar)``.  Raises if M is rank deficient
        (Phi is then flat or unbounded along its null space).
        """
        M = np.mean(self.B @ self.A, axis=0)
        m = np.mean(np.einsum("kij,kj->ki", self.B, self.a) - self.b, axis=0)
        cbar = np.mean(np.einsum("kij,ki->kj", self.A, self.c), axis=0)
        if np.linalg.matrix_rank(M) < self.d1:
            raise ValueError("composite map mean(B_k A_k) is rank deficient; no unique minimizer")
        x_star, *_ = np.linalg.lstsq(M.T @ M, -(M.T @ m + self.mu * cbar), rcond=None)
        return x_star, (M @ x_star + m) / self.mu


class TanhProblem(QuadraticProblem):
    """Inner map ``g_k(x) = tanh(A_k x + a_k)``: nonconvex in x, still mu-strongly concave in y."""

    family = "tanh"

    def _inner_radius(self, norm_A):
        return np.sqrt(self.d0)

    def _inner_smoothness(self, norm_A):
        return _TANH_CURVATURE * norm_A**2

    def g(self, k, x):
        return np.tanh(self.A[k] @ x + self.a[k])

    def jac(self, k, x):
        s = np.tanh(self.A[k] @ x + self.a[k])
        return (1.0 - s * s)[:, None] * self.A[k]

    def saddle_point(self):
        raise NotImplementedError("the tanh family has no closed-form saddle point")


def _draw_parameters(K, d0, d1, d2, heterogeneity, outer_heterogeneity, seed):
    rng = np.random.default_rng(seed)
    sa = 0.3 / np.sqrt(max(d0, d1))
    sb = 0.3 / np.sqrt(max(d0, d2))
    A0 = np.eye(d0, d1) + sa * rng.standard_normal((d0, d1))
    B0 = np.eye(d2, d0) + sb * rng.standard_normal((d2, d0))
    a0 = 0.5 * rng.standard_normal(d0) / np.sqrt(d0)
    b0 = 0.5 * rng.standard_normal(d2) / np.sqrt(d2)
    c0 = 0.5 * rng.standard_normal(d0) / np.sqrt(d0)
    # per-worker deviations are always drawn so the seed -> instance map does
    # not depend on the heterogeneity scale
    dA = sa * rng.standard_normal((K, d0, d1))
    dB = sb * rng.standard_normal((K, d2, d0))
    da = rng.standard_normal((K, d0)) / np.sqrt(d0)
    db = rng.standard_normal((K, d2)) / np.sqrt(d2)
    dc = rng.standard_normal((K, d0)) / np.sqrt(d0)
    # centred deviations keep the network-average parameters equal to the
    # common draw for every K
    dA, dB, da, db, dc = (arr - arr.mean(axis=0) for arr in (dA, dB, da, db, dc))
    het = heterogeneity
    return dict(
        A=A0 + het * dA,
        a=a0 + het * da,
        B=B0 + outer_heterogeneity * dB,
        b=b0 + het * db,
        c=c0 + het * dc,
    )


def make_quadratic(
    K,
    d0,
    d1,
    d2,
    mu=1.0,
    *,
    sigma_f=0.0,
    sigma_g=0.0,
    sigma_g_prime=0.0,
    heterogeneity=0.5,
    outer_heterogeneity=0.0,
    radius=10.0,
    seed=0,
) -> QuadraticProblem:
    """Seeded quadratic instance.

    ``heterogeneity`` scales how far each worker's ``A_k, a_k, b_k, c_k``
    deviate from a common draw; 0 gives identical shards.  Deviations are
    centred across workers, so with K = 1 the instance is the common draw.
    The coupling ``B_k`` varies only with ``outer_heterogeneity`` (default 0): the
    tracked inner estimate of gradient tracking converges to the network
    average of the inner values, and the averaged problem is only unchanged
    by that substitution when the outer level is affine in ``g`` with a
    worker-shared coupling.
    """
    if min(K, d0, d1, d2) < 1:
        raise ValueError("K and all dimensions must be >= 1")
    params = _draw_parameters(K, d0, d1, d2, heterogeneity, outer_heterogeneity, seed)
    return QuadraticProblem(
        **params, mu=mu, sigma_f=sigma_f, sigma_g=sigma_g, sigma_g_prime=sigma_g_prime, radius=radius
    )


def make_tanh(
    K,
    d0,
    d1,
    d2,
    mu=1.0,
    *,
    sigma_f=0.0,
    sigma_g=0.0,
    sigma_g_prime=0.0,
    heterogeneity=0.5,
    outer_heterogeneity=0.0,
    radius=10.0,
    seed=0,
) -> TanhProblem:
    """Seeded tanh instance; same parameter draw as :func:`make_quadratic`."""
    if min(K, d0, d1, d2) < 1:
        raise ValueError("K and all dimensions must be >= 1")
    params = _draw_parameters(K, d0, d1, d2, heterogeneity, outer_heterogeneity, seed)
    return TanhProblem(
        **params, mu=mu, sigma_f=sigma_f, sigma_g=sigma_g, sigma_g_prime=sigma_g_prime, radius=radius
    )
