"""Closed-form constants and step-size bounds for the gossip and tracking regimes.

``theorem1_bounds`` covers the gossip method, ``theorem2_bounds`` the
gradient-tracking method.  Both return a :class:`RegimeReport` telling which
hyperparameters sit inside the proven regime.  The check is advisory: the
harness prints it but runs regardless.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = [
    "RegimeReport",
    "l_phi",
    "kappa",
    "theorem1_constants",
    "theorem2_constants",
    "theorem1_bounds",
    "theorem2_bounds",
    "format_report",
]


@dataclass(frozen=True)
class RegimeReport:
    theorem: int
    l_phi: float
    kappa: float
    spectral_gap: float
    bounds: dict
    satisfied: dict
    values: dict
    constants: dict = field(default_factory=dict)

    @property
    def all_satisfied(self):
        return all(self.satisfied.values())

    def violations(self):
        return [name for name, ok in self.satisfied.items() if not ok]


def l_phi(c) -> float:
    """Smoothness of Phi: 2 C_g^2 L_f^2 / mu + C_f L_g."""
    if not c.mu > 0:
        raise ValueError(f"mu must be > 0, got {c.mu}")
    return 2.0 * c.C_g**2 * c.L_f**2 / c.mu + c.C_f * c.L_g


def kappa(c) -> float:
    return c.L_f / c.mu


def _inverse_rates(hp):
    for name in ("alpha", "beta_x", "beta_y"):
        if not getattr(hp, name) > 0:
            raise ValueError(f"{name} must be > 0, got {getattr(hp, name)}")
    return 1.0 / hp.alpha, 1.0 / hp.beta_x**2, 1.0 / hp.beta_y**2


def theorem1_constants(c, hp) -> dict:
    """gamma_x1, gamma_x2, C4_hat, C5_hat for the gossip regime."""
    ia, ibx2, iby2 = _inverse_rates(hp)
    cg4lf2 = c.C_g**4 * c.L_f**2
    cf2lg2 = c.C_f**2 * c.L_g**2
    mixed = (104.0 * ia + 315.0 * ia**2 + 8.0 * ibx2 + 100.0 * iby2) * cg4lf2
    gamma_x1 = 8.0 * ibx2 * cf2lg2 + mixed
    c4 = (2566.0 + 64.0 * ibx2 + 800.0 * iby2 + 832.0 * ia + 2520.0 * ia**2) * cg4lf2 + (5.0 + 64.0 * ibx2) * cf2lg2
    gamma_x2 = c4 + cf2lg2 + 1264.0 * cg4lf2 + 32.0 * ibx2 * cf2lg2 + 4.0 * mixed
    c5 = 55.0 + 64.0 * ibx2 + 800.0 * iby2
    return {"gamma_x1": gamma_x1, "gamma_x2": gamma_x2, "C4_hat": c4, "C5_hat": c5}


def theorem2_constants(c, hp) -> dict:
    ia, ibx2, iby2 = _inverse_rates(hp)
    cg4lf2 = c.C_g**4 * c.L_f**2
    cf2lg2 = c.C_f**2 * c.L_g**2
    gamma_x1 = 8.0 * (cg4lf2 + cf2lg2) * ibx2 + 100.0 * cg4lf2 * iby2 + 312.0 * cg4lf2 * ia + 4056.0 * cg4lf2
    return {"gamma_x1": gamma_x1}


def _eta_bound(c, hp):
    return min(1.0 / hp.alpha, 1.0 / hp.beta_x, 1.0 / hp.beta_y, 1.0 / (2.0 * hp.gamma_x * l_phi(c)), 1.0)


def _dual_coupling(c, hp):
    # 9 mu / (8 L_f^2 (8/beta_x^2 + 100/beta_y^2)); infinite when both betas are
    _, ibx2, iby2 = _inverse_rates(hp)
    denom = 8.0 * c.L_f**2 * (8.0 * ibx2 + 100.0 * iby2)
    return math.inf if denom == 0 else 9.0 * c.mu / denom


def _report(theorem, c, lam, hp, bounds, consts):
    values = {"gamma_x": hp.gamma_x, "gamma_y": hp.gamma_y, "eta": hp.eta}
    satisfied = {
        "gamma_x": hp.gamma_x <= bounds["gamma_x"],
        "gamma_y": hp.gamma_y <= bounds["gamma_y"],
        "eta": hp.eta < bounds["eta"],
    }
    return RegimeReport(
        theorem=theorem,
        l_phi=l_phi(c),
        kappa=kappa(c),
        spectral_gap=1.0 - lam,
        bounds=bounds,
        satisfied=satisfied,
        values=values,
        constants=consts,
    )


def _check_lambda(lam):
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")


def theorem1_bounds(c, lam, hp) -> RegimeReport:
    """Upper bounds on gamma_x, gamma_y, eta for the gossip method."""
    _check_lambda(lam)
    k = theorem1_constants(c, hp)
    _, ibx2, iby2 = _inverse_rates(hp)
    gap = 1.0 - lam
    gamma_y = min(
        1.0 / (6.0 * c.L_f),
        gap / (3.0 * c.L_f * math.sqrt(k["C5_hat"] + 1.0 + 32.0 * ibx2 + 400.0 * iby2)),
        _dual_coupling(c, hp),
    )
    gamma_x = min(
        hp.gamma_y * c.mu**2 / (20.0 * c.C_g**2 * c.L_f**2),
        c.mu / (8.0 * c.L_f * math.sqrt(k["gamma_x1"])),
        gap / (4.0 * math.sqrt(k["gamma_x2"])),
    )
    bounds = {"gamma_x": gamma_x, "gamma_y": gamma_y, "eta": _eta_bound(c, hp)}
    return _report(1, c, lam, hp, bounds, k)


def theorem2_bounds(c, lam, hp) -> RegimeReport:
    """Upper bounds for the gradient-tracking method; the gamma_y bound does not involve lambda."""
    _check_lambda(lam)
    k = theorem2_constants(c, hp)
    gap = 1.0 - lam
    gamma_y = min(1.0 / (6.0 * c.L_f), _dual_coupling(c, hp))
    gamma_x = min(
        c.mu**2 * hp.gamma_y / (20.0 * c.C_g**2 * c.L_f**2),
        c.mu * gap / (8.0 * c.L_f * math.sqrt(k["gamma_x1"])),
    )
    bounds = {"gamma_x": gamma_x, "gamma_y": gamma_y, "eta": _eta_bound(c, hp)}
    return _report(2, c, lam, hp, bounds, k)


_METHOD = {1: "gossip (gp)", 2: "gradient tracking (gt)"}


def format_report(report: RegimeReport) -> str:
    """Aligned human-readable table followed by a ``key=value`` block."""
    lines = [f"{_METHOD[report.theorem]} step-size regime"]
    lines.append(f"  {'L_phi':<14}{report.l_phi:>14.6g}")
    lines.append(f"  {'kappa':<14}{report.kappa:>14.6g}")
    lines.append(f"  {'spectral gap':<14}{report.spectral_gap:>14.6g}")
    for name, value in report.constants.items():
        lines.append(f"  {name:<14}{value:>14.6g}")
    lines.append(f"  {'param':<10}{'value':>12}    {'bound':>12}  ok")
    for name, bound in report.bounds.items():
        op = "<" if name == "eta" else "<="
        ok = "yes" if report.satisfied[name] else "NO"
        lines.append(f"  {name:<10}{report.values[name]:>12.6g} {op:<2} {bound:>12.6g}  {ok}")
    lines.append("")
    lines.append(f"theorem={report.theorem}")
    lines.append(f"l_phi={report.l_phi!r}")
    lines.append(f"kappa={report.kappa!r}")
    lines.append(f"spectral_gap={report.spectral_gap!r}")
    for name, value in report.constants.items():
        lines.append(f"{name}={value!r}")
    for name, bound in report.bounds.items():
        lines.append(f"bound.{name}={bound!r}")
        lines.append(f"satisfied.{name}={str(report.satisfied[name]).lower()}")
    return "\n".join(lines)
