"""Falsification checks on blinded trial data: blinding and positivity."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import fisher_exact

from .dataset import check_trial_data
from .exceptions import DataSchemaError


@dataclass(frozen=True)
class BlindingTestResult:
    p1: float
    p0: float
    difference: float
    z: float
    p_value: float
    alpha: float
    reject: bool
    method: str = "pooled-z"

    @property
    def verdict(self):
        return "blinding rejected" if self.reject else "no evidence against blinding"


def blinding_test(ds, alpha=0.05, exact=False):
    """Test Pr(B=1 | A=1) = Pr(B=1 | A=0).

    The default is the pooled two-proportion z-test with a two-sided normal
    p-value.  ``exact=True`` reports Fisher's exact test p-value instead
    (the z statistic is still returned).
    """
    ds = check_trial_data(ds)
    n1, n0 = ds.n1, ds.n0
    if n0 == 0 or n1 == 0:
        raise DataSchemaError("blinding test needs records in both arms")
    x1 = int(ds.b[ds.a == 1].sum())
    x0 = int(ds.b[ds.a == 0].sum())
    p1, p0 = x1 / n1, x0 / n0
    pooled = (x1 + x0) / (n1 + n0)
    se = math.sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n0))
    if se == 0.0:
        z = 0.0
        p_value = 1.0
    else:
        z = (p1 - p0) / se
        p_value = math.erfc(abs(z) / math.sqrt(2.0))
    method = "pooled-z"
    if exact:
        table = [[x1, n1 - x1], [x0, n0 - x0]]
        p_value = float(fisher_exact(table, alternative="two-sided")[1])
        method = "fisher-exact"
    p_value = min(max(p_value, 0.0), 1.0)
    return BlindingTestResult(
        p1=p1, p0=p0, difference=p1 - p0, z=z, p_value=p_value,
        alpha=alpha, reject=p_value < alpha, method=method,
    )


@dataclass
class PositivityAudit:
    """Cell counts behind the two identification formulas.

    Keys of the count tables are tuples: ``(l, a, b)``, ``(l, a, s)`` and
    ``(l, a, s, b)``.  ``violations`` lists ``(cell, requirement)`` pairs
    for required cells with zero count, where the requirement is ``belief``,
    ``side_effect`` or ``belief_given_s``.  When the data carry no S column the
    S-based section is ``None`` and ``s_assessable`` is False.
    """

    lab: dict
    las: dict | None
    lasb: dict | None
    violations: list = field(default_factory=list)
    s_assessable: bool = True
    levels: tuple = (0,)

    @property
    def ok(self):
        return not self.violations


def positivity_audit(ds, family="both"):
    """Count every stratum used by the identification formulas and flag empty ones.

    ``family`` selects which requirements to enforce: ``"unadjusted"`` (belief
    within covariate and arm), ``"s_adjusted"`` (side effect within covariate
    and arm, and belief within covariate, arm and side effect) or ``"both"``.
    """
    ds = check_trial_data(ds)
    if family not in ("unadjusted", "s_adjusted", "both"):
        raise ValueError(f"family must be 'unadjusted', 's_adjusted' or 'both', got {family!r}")
    if ds.has_l:
        levels = tuple(int(v) for v in np.unique(ds.l))
        l = ds.l
    else:
        levels = (0,)
        l = np.zeros(ds.n, dtype=np.int64)

    lab = {}
    for lv, a, b in itertools.product(levels, (0, 1), (0, 1)):
        lab[lv, a, b] = int(np.sum((l == lv) & (ds.a == a) & (ds.b == b)))
    violations = []
    if family in ("unadjusted", "both"):
        violations += [({"l": k[0], "a": k[1], "b": k[2]}, "belief") for k, c in lab.items() if c == 0]

    if not ds.has_s:
        return PositivityAudit(lab=lab, las=None, lasb=None, violations=violations,
                               s_assessable=False, levels=levels)
    las, lasb = {}, {}
    for lv, a, s in itertools.product(levels, (0, 1), (0, 1)):
        in_cell = (l == lv) & (ds.a == a) & (ds.s == s)
        las[lv, a, s] = int(in_cell.sum())
        for b in (0, 1):
            lasb[lv, a, s, b] = int(np.sum(in_cell & (ds.b == b)))
    if family in ("s_adjusted", "both"):
        violations += [({"l": k[0], "a": k[1], "s": k[2]}, "side_effect") for k, c in las.items() if c == 0]
        violations += [({"l": k[0], "a": k[1], "s": k[2], "b": k[3]}, "belief_given_s")
                       for k, c in lasb.items() if c == 0]
    return PositivityAudit(lab=lab, las=las, lasb=lasb, violations=violations,
                           s_assessable=True, levels=levels)


def format_report(test, audit):
    """Human-readable table of both diagnostics, three decimals."""
    lines = [
        "Blinding assessment",
        f"  Pr(B=1|A=1)   {test.p1:.3f}",
        f"  Pr(B=1|A=0)   {test.p0:.3f}",
        f"  difference    {test.difference:.3f}",
        f"  z             {test.z:.3f}",
        f"  p-value       {test.p_value:.3f}   ({test.method})",
        f"  verdict       {test.verdict} at alpha={test.alpha:g}",
        "",
        "Positivity audit",
        "  cell (l,a,b)        count",
    ]
    for k, c in audit.lab.items():
        lines.append(f"  {str(k):<18}  {c}")
    if audit.s_assessable:
        lines.append("  cell (l,a,s,b)      count")
        for k, c in audit.lasb.items():
            lines.append(f"  {str(k):<18}  {c}")
    else:
        lines.append("  side-effect strata: not assessable (no 's' column)")
    if audit.violations:
        lines.append("  violations:")
        for cell, requirement in audit.violations:
            lines.append(f"    {cell} empty ({requirement} positivity)")
    else:
        lines.append("  violations: none")
    return "\n".join(lines)
