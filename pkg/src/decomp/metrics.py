"""Diagnostics measured along a run: consensus errors, stationarity, slope fits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "CONSENSUS_QUANTITIES",
    "CSV_COLUMNS",
    "TraceRecord",
    "Stationarity",
    "consensus_error",
    "stationarity",
    "fit_loglog_slope",
    "steady_state_consensus",
    "make_record",
    "write_trace_csv",
    "read_trace_csv",
]

CONSENSUS_QUANTITIES = ("x", "y", "h", "u", "v", "p", "q", "r")
CSV_COLUMNS = (
    ("t", "objective", "grad_phi_sq", "dual_gap_sq", "criterion")
    + tuple(f"cons_{name}" for name in CONSENSUS_QUANTITIES)
    + ("auroc", "wall_ms")
)


@dataclass(frozen=True)
class TraceRecord:
    t: int
    objective: float
    grad_phi_sq: float
    dual_gap_sq: float
    criterion: float
    consensus: dict = field(default_factory=dict)
    auroc: float | None = None
    wall_ms: float = 0.0

    def row(self, wall_time=True):
        """Values in :data:`CSV_COLUMNS` order; absent quantities are ``None``."""
        values = [self.t, self.objective, self.grad_phi_sq, self.dual_gap_sq, self.criterion]
        values += [self.consensus.get(name) for name in CONSENSUS_QUANTITIES]
        values += [self.auroc, self.wall_ms if wall_time else None]
        return values


class Stationarity(NamedTuple):
    grad_phi_sq: float
    dual_gap_sq: float
    criterion: float
    converged: bool


def consensus_error(values) -> float:
    """(1/K) sum_k ||v_k - mean||^2 for a (K, d) array or a list of K vectors."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"expected K >= 1 vectors of a common dimension, got shape {arr.shape}")
    dev = arr - arr.mean(axis=0)
    return float(np.mean(np.sum(dev * dev, axis=1)))


def stationarity(instance, x_bar, y_bar) -> Stationarity:
    """||grad Phi(x_bar)||^2, ||y*(x_bar) - y_bar||^2 and their weighted sum.

    The weight on the dual gap is ``C_g^2 L_f^2`` from the instance constants.
    """
    y_bar = np.asarray(y_bar, dtype=float)
    y_star, ok_y = instance.best_response(x_bar)
    _, grad, ok_phi = instance.phi_and_grad(x_bar)
    grad_phi_sq = float(grad @ grad)
    gap = y_star - y_bar
    dual_gap_sq = float(gap @ gap)
    c = instance.constants
    criterion = grad_phi_sq + c.C_g**2 * c.L_f**2 * dual_gap_sq
    return Stationarity(grad_phi_sq, dual_gap_sq, criterion, ok_y and ok_phi)


def fit_loglog_slope(points):
    """Least-squares slope of log(value) against log(scale).

    Returns ``(slope, r_squared)``; needs at least 3 strictly positive points.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ValueError("need at least 3 (scale, value) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ValueError("scales and values must be finite and positive")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


def steady_state_consensus(trace, quantity, window) -> float:
    """Mean consensus error of ``quantity`` over the last ``window`` records."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if window > len(trace):
        raise ValueError(f"window {window} exceeds trace length {len(trace)}")
    values = [rec.consensus[quantity] for rec in trace[-window:]]
    return float(np.mean(values))


def make_record(state, instance, wall_ms=0.0, test_data=None) -> TraceRecord:
    """Diagnostics of one swarm state, measured at the network averages."""
    x_bar = state.x.mean(axis=0)
    y_bar = state.y.mean(axis=0)
    st = stationarity(instance, x_bar, y_bar)
    consensus = {name: consensus_error(getattr(state, name)) for name in state.tracked()}
    auroc = None
    if test_data is not None:
        from .problems import auroc_score

        auroc = auroc_score(instance.classifier(x_bar), test_data)
    return TraceRecord(
        t=state.t,
        objective=instance.deterministic_objective(x_bar, y_bar),
        grad_phi_sq=st.grad_phi_sq,
        dual_gap_sq=st.dual_gap_sq,
        criterion=st.criterion,
        consensus=consensus,
        auroc=auroc,
        wall_ms=wall_ms,
    )


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(path, trace, wall_time=True):
    """Write a trace with the fixed column order; absent quantities are empty fields.

    ``wall_time=False`` leaves the ``wall_ms`` column empty so the file is a
    deterministic function of the run inputs.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in trace:
            writer.writerow([_fmt(v) for v in rec.row(wall_time)])


def read_trace_csv(path):
    """Inverse of :func:`write_trace_csv` (floats round-trip exactly)."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            consensus = {
                name: float(row[f"cons_{name}"]) for name in CONSENSUS_QUANTITIES if row[f"cons_{name}"] != ""
            }
            records.append(
                TraceRecord(
                    t=int(row["t"]),
                    objective=float(row["objective"]),
                    grad_phi_sq=float(row["grad_phi_sq"]),
                    dual_gap_sq=float(row["dual_gap_sq"]),
                    criterion=float(row["criterion"]),
                    consensus=consensus,
                    auroc=float(row["auroc"]) if row["auroc"] else None,
                    wall_ms=float(row["wall_ms"]) if row["wall_ms"] else 0.0,
                )
            )
    return records
