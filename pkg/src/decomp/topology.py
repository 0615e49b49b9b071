"""Communication graphs as symmetric doubly stochastic mixing matrices."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "MixingMatrix",
    "TopologyError",
    "build_ring",
    "build_complete",
    "build_from_weights",
    "load_weights",
    "mix",
]

WEIGHT_TOL = 1e-12


class TopologyError(ValueError):
    """Raised when a weight matrix violates a mixing-matrix invariant."""


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Validated K x K mixing matrix with its second-largest absolute eigenvalue.

    Use the ``build_*`` constructors; direct instantiation skips validation.
    """

    weights: np.ndarray
    lam: float

    @property
    def K(self) -> int:
        return self.weights.shape[0]

    @property
    def spectral_gap(self) -> float:
        return 1.0 - self.lam

    def __repr__(self):
        return f"MixingMatrix(K={self.K}, lambda={self.lam:.6g})"


def _second_abs_eigenvalue(weights: np.ndarray) -> float:
    K = weights.shape[0]
    if K == 1:
        return 0.0
    eig = np.sort(np.abs(np.linalg.eigvalsh(weights)))
    # the top eigenvalue is 1 (row sums); drop one copy of it
    return float(eig[-2])


def build_from_weights(weights) -> MixingMatrix:
    """Validate ``weights`` and wrap it as a :class:`MixingMatrix`.

    Raises :class:`TopologyError` naming the violated invariant: shape,
    symmetry, nonnegativity, unit row/column sums, or ``lambda < 1``.
    """
    w = np.array(weights, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
        raise TopologyError(f"weights must be a non-empty square matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise TopologyError("weights contain non-finite entries")
    if not np.array_equal(w, w.T):
        raise TopologyError("weights are not symmetric")
    if np.any(w < 0):
        raise TopologyError("weights contain a negative entry")
    rows = np.abs(w.sum(axis=1) - 1.0)
    if rows.max() > WEIGHT_TOL:
        raise TopologyError(f"row sum != 1 (max deviation {rows.max():.3g})")
    cols = np.abs(w.sum(axis=0) - 1.0)
    if cols.max() > WEIGHT_TOL:
        raise TopologyError(f"column sum != 1 (max deviation {cols.max():.3g})")
    lam = _second_abs_eigenvalue(w)
    if lam >= 1.0 - WEIGHT_TOL:
        raise TopologyError(f"lambda >= 1 ({lam:.6g}): graph is disconnected or periodic")
    w.setflags(write=False)
    return MixingMatrix(weights=w, lam=lam)


def build_ring(K: int, self_weight: float = 0.5) -> MixingMatrix:
    """Ring of ``K >= 3`` workers; each neighbour gets ``(1 - self_weight) / 2``."""
    if K < 3:
        raise TopologyError(f"ring requires K >= 3, got {K}")
    if not 0.0 < self_weight < 1.0:
        raise TopologyError(f"self_weight must lie in (0, 1), got {self_weight}")
    side = (1.0 - self_weight) / 2.0
    w = np.zeros((K, K))
    idx = np.arange(K)
    w[idx, idx] = self_weight
    w[idx, (idx + 1) % K] += side
    w[idx, (idx - 1) % K] += side
    return build_from_weights(w)


def build_complete(K: int) -> MixingMatrix:
    if K < 1:
        raise TopologyError(f"K must be >= 1, got {K}")
    w = np.full((K, K), 1.0 / K)
    w.setflags(write=False)
    # exact averaging: every eigenvalue but the top one is zero
    return MixingMatrix(weights=w, lam=0.0)


def load_weights(path) -> MixingMatrix:
    """Read a whitespace-separated K x K matrix, one row per line."""
    text = Path(path).read_text(encoding="utf-8")
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    try:
        w = np.array([[float(v) for v in row] for row in rows])
    except ValueError as exc:
        raise TopologyError(f"{path}: {exc}") from None
    return build_from_weights(w)


def mix(W: MixingMatrix, values):
    """One synchronous gossip round: output ``k`` is ``sum_j w_kj * values[j]``.

    ``values`` is either a (K, d) array or a sequence of K equal-length
    vectors; the return type follows the input.
    """
    if isinstance(values, np.ndarray):
        stacked = values
        as_list = False
    else:
        try:
            stacked = np.stack([np.asarray(v, dtype=float) for v in values])
        except ValueError as exc:
            raise ValueError(f"dimension mismatch among gossip inputs: {exc}") from None
        as_list = True
    if stacked.shape[0] != W.K:
        raise ValueError(f"expected {W.K} worker values, got {stacked.shape[0]}")
    # v_k + sum_j w_kj (v_j - v_k): equal inputs come back bit-for-bit
    diff = stacked[None, :, :] - stacked[:, None, :]
    out = stacked + np.einsum("kj,kjd->kd", W.weights, diff)
    return list(out) if as_list else out
