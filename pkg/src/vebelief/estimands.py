"""Exact vaccine-efficacy estimands, decompositions and identification formulas."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import NotAssessableError, ParameterDomainError, PositivityError, UndefinedEstimandError
from .scm import ARMS, MESSAGES, Intervention, build_dgm1, joint_distribution, potential_outcome_mean

#: Conventional blinded-trial VE estimates drawn as horizontal reference lines
#: on the VE(-1) versus RR_B curve.  External values, for annotation only.
REFERENCE_VE_MINUS1 = (
    ("COVID-19 (mRNA vaccine trial)", 0.95),
    ("pertussis (acellular vaccine trial)", 0.71),
    ("influenza (elderly vaccine trial)", 0.50),
)

CURVE_VE_T = (0.3, 0.5, 0.7, 0.9)


def _ratio_contrast(num, den, label):
    if den == 0.0:
        raise UndefinedEstimandError(f"{label} is undefined: zero denominator")
    return 1.0 - num / den


def ve(scm, m):
    """VE(m) = 1 - E(Y^{1,m}) / E(Y^{0,m})."""
    return _ratio_contrast(
        potential_outcome_mean(scm, 1, m), potential_outcome_mean(scm, 0, m), f"VE({m})"
    )


def ve_total(scm):
    """Total VE, 1 - E(Y^{1,1}) / E(Y^{0,0})."""
    return _ratio_contrast(
        potential_outcome_mean(scm, 1, 1), potential_outcome_mean(scm, 0, 0), "VE_t"
    )


def ve_behavioral(scm, a):
    """Behavioral VE at fixed arm, VE_m(a) = 1 - E(Y^{a,1}) / E(Y^{a,0})."""
    return _ratio_contrast(
        potential_outcome_mean(scm, a, 1), potential_outcome_mean(scm, a, 0), f"VE_m({a})"
    )


@dataclass(frozen=True)
class Decomposition:
    """Two-component split of the total effect on the additive or VE scale.

    ``residual`` is the defect of the identity (total minus the recombined
    components) and is zero up to rounding.
    """

    scale: str
    pivot: int
    components: tuple
    total: float
    residual: float

    def values(self):
        return tuple(v for _, v in self.components)


def decompose_total(scm, scale="ve", pivot=0):
    """Decompose the total effect into behavioral and immunological parts.

    ``pivot`` is the arm at which the behavioral component is evaluated; the
    immunological component is then taken at the message ``1 - pivot``.

    On the additive scale with ``pivot=1`` the split is
    ``[E(Y^{1,1}) - E(Y^{1,0})] + [E(Y^{1,0}) - E(Y^{0,0})]`` and with
    ``pivot=0`` it is ``[E(Y^{1,1}) - E(Y^{0,1})] + [E(Y^{0,1}) - E(Y^{0,0})]``.
    On the VE scale the pair is ``(VE_m(pivot), VE(1 - pivot))`` and the
    identity is ``VE_t = x + y - x*y``.
    """
    if pivot not in ARMS:
        raise ValueError(f"pivot must be 0 or 1, got {pivot!r}")
    e = {(a, m): potential_outcome_mean(scm, a, m) for a in ARMS for m in (0, 1)}
    if scale == "additive":
        total = e[1, 1] - e[0, 0]
        if pivot == 1:
            comps = (
                ("behavioral E(Y^(1,1))-E(Y^(1,0))", e[1, 1] - e[1, 0]),
                ("immunological E(Y^(1,0))-E(Y^(0,0))", e[1, 0] - e[0, 0]),
            )
        else:
            comps = (
                ("immunological E(Y^(1,1))-E(Y^(0,1))", e[1, 1] - e[0, 1]),
                ("behavioral E(Y^(0,1))-E(Y^(0,0))", e[0, 1] - e[0, 0]),
            )
        residual = total - (comps[0][1] + comps[1][1])
    elif scale == "ve":
        total = ve_total(scm)
        behav = ve_behavioral(scm, pivot)
        immuno = ve(scm, 1 - pivot)
        comps = ((f"VE_m({pivot})", behav), (f"VE({1 - pivot})", immuno))
        residual = total - (behav + immuno - behav * immuno)
    else:
        raise ValueError(f"scale must be 'additive' or 've', got {scale!r}")
    return Decomposition(scale=scale, pivot=pivot, components=comps, total=total, residual=residual)


def ve_minus1_closed_form(ve_t, rr_b):
    """VE(-1) under the broken-blinding illustration, as a function of VE_t and RR_B."""
    ve_t = float(ve_t)
    rr_b = float(rr_b)
    if not 1.0 <= rr_b <= 2.0:
        raise ParameterDomainError(f"rr_b = {rr_b!r} must lie in [1, 2]")
    if ve_t > 1.0:
        raise ParameterDomainError(f"ve_t = {ve_t!r} must be <= 1")
    return 1.0 - (1.0 - ve_t) * (0.005 + 0.0025 * rr_b) / 0.015


def identification_formula(scm, a, m, adjust_for_s=False):
    """Evaluate the blinded-trial identification formula for E(Y^{a,m}), m in {0, 1}.

    Without S this is ``sum_l E(Y | l, a, B=m) Pr(l)``; with S it is
    ``sum_{s,l} E(Y | l, a, s, B=m) Pr(s | l, a) Pr(l)``.  Both are computed
    from the model's M=-1 law.  The result equals E(Y^{a,m}) whenever the
    matching dismissible component condition holds.
    """
    if m not in (0, 1):
        raise ValueError(f"m must be 0 or 1 for identification, got {m!r}")
    if adjust_for_s and not scm.has_s:
        raise NotAssessableError("model has no side-effect node to adjust for")
    joint = joint_distribution(scm, Intervention(a, -1))
    pl = scm.l_marginal()
    value = 0.0
    for l in range(scm.n_l):
        if pl[l] == 0.0:
            continue
        if not adjust_for_s:
            p_cell = joint.prob(l=l, b=m)
            if p_cell == 0.0:
                raise PositivityError(
                    f"Pr(B={m} | L={l}, A={a}) = 0", cell={"l": l, "a": a, "b": m}
                )
            value += joint.prob(l=l, b=m, y=1) / p_cell * pl[l]
            continue
        for s in (0, 1):
            p_s = joint.conditional({"s": s}, {"l": l})
            if p_s == 0.0:
                raise PositivityError(
                    f"Pr(S={s} | L={l}, A={a}) = 0", cell={"l": l, "a": a, "s": s}
                )
            p_cell = joint.prob(l=l, s=s, b=m)
            if p_cell == 0.0:
                raise PositivityError(
                    f"Pr(B={m} | L={l}, A={a}, S={s}) = 0",
                    cell={"l": l, "a": a, "s": s, "b": m},
                )
            value += joint.prob(l=l, s=s, b=m, y=1) / p_cell * p_s * pl[l]
    return value


def conditional_ve(scm, s):
    """Population value of 1 - E(Y | A=1, S=s) / E(Y | A=0, S=s) in the blinded trial.

    Not a causal contrast; it is the limit of the S-stratified naive estimator.
    """
    if not scm.has_s:
        raise NotAssessableError("model has no side-effect node")
    rates = []
    for a in ARMS:
        joint = joint_distribution(scm, Intervention(a, -1))
        rates.append(joint.conditional({"y": 1}, {"s": s}))
    if np.isnan(rates[0]) or np.isnan(rates[1]):
        raise PositivityError(f"Pr(S={s} | A=a) = 0 in some arm", cell={"s": s})
    return _ratio_contrast(rates[1], rates[0], f"VE(-1, S={s})")


@dataclass
class EstimandReport:
    """All named exact estimands of one model."""

    e_y: dict
    ve_by_message: dict
    ve_total: float
    ve_behavioral: dict
    decompositions: list = field(default_factory=list)
    ve_conditional: dict = field(default_factory=dict)

    @property
    def ve_minus1(self):
        return self.ve_by_message[-1]

    @property
    def ve_0(self):
        return self.ve_by_message[0]

    @property
    def ve_1(self):
        return self.ve_by_message[1]

    def rows(self):
        """Flat (quantity, value) pairs in a stable order."""
        out = []
        for m in MESSAGES:
            for a in (1, 0):
                out.append((f"E(Y^(a={a},m={m}))", self.e_y[a, m]))
        for m in MESSAGES:
            out.append((f"VE({m})", self.ve_by_message[m]))
        out.append(("VE_t", self.ve_total))
        for a in ARMS:
            out.append((f"VE_m({a})", self.ve_behavioral[a]))
        for s, v in sorted(self.ve_conditional.items()):
            out.append((f"VE(-1,S={s})", v))
        for dec in self.decompositions:
            for label, value in dec.components:
                out.append((f"{dec.scale}[pivot={dec.pivot}] {label}", value))
            out.append((f"{dec.scale}[pivot={dec.pivot}] residual", dec.residual))
        return out


def estimand_report(scm):
    e_y = {(a, m): potential_outcome_mean(scm, a, m) for a in ARMS for m in MESSAGES}
    report = EstimandReport(
        e_y=e_y,
        ve_by_message={m: ve(scm, m) for m in MESSAGES},
        ve_total=ve_total(scm),
        ve_behavioral={a: ve_behavioral(scm, a) for a in ARMS},
    )
    for scale, pivot in itertools.product(("additive", "ve"), (1, 0)):
        report.decompositions.append(decompose_total(scm, scale, pivot))
    if scm.has_s:
        for s in (0, 1):
            try:
                report.ve_conditional[s] = conditional_ve(scm, s)
            except (PositivityError, UndefinedEstimandError):
                pass
    return report


def rr_b_grid_points(n_points=101):
    return np.linspace(1.0, 2.0, n_points)


def ve_curve(ve_t_values=CURVE_VE_T, rr_b_grid=None):
    """Rows of the VE(-1) versus VE_t comparison across the RR_B grid.

    Each row carries the closed-form VE(-1), the enumeration value from the
    constructed model, their absolute difference, and VE(0), VE(1), VE_t.
    """
    if rr_b_grid is None:
        rr_b_grid = rr_b_grid_points()
    rows = []
    for ve_t_value in ve_t_values:
        for rr_b in rr_b_grid:
            scm = build_dgm1(rr_b, ve_t_value)
            closed = ve_minus1_closed_form(ve_t_value, rr_b)
            enumerated = ve(scm, -1)
            rows.append({
                "rr_b": float(rr_b),
                "ve_t": float(ve_t_value),
                "ve_minus1": closed,
                "ve_0": ve(scm, 0),
                "ve_1": ve(scm, 1),
                "ve_total": ve_total(scm),
                "ve_minus1_enumerated": enumerated,
                "abs_diff": abs(closed - enumerated),
            })
    return rows
