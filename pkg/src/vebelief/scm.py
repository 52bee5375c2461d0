"""Discrete structural causal models over (U, L, A, M, S, B, Y).

The model is a set of conditional probability tables (CPTs).  Every variable
except L is binary; L is categorical with a finite support.  Absent nodes are
carried as singleton axes so that every table has a fixed layout:

    s_cpt[a, u, l]        Pr(S=1 | A=a, U=u, L=l)
    b_cpt[a, s, u, l]     Pr(B=1 | A=a, S=s, U=u, L=l, M=-1)
    y_cpt[a, s, b, u, l]  Pr(Y=1 | A=a, S=s, B=b, U=u, L=l)

Under a message m in {0, 1} the belief is forced, B := m.  The outcome table
has no message axis, so the message reaches Y only through B.

All quantities are computed by exact enumeration; nothing here samples.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterDomainError

ARMS = (0, 1)
MESSAGES = (-1, 0, 1)
_AXES = ("u", "l", "s", "b", "y")
_NORM_TOL = 1e-12


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_probs(name, arr):
    arr = np.asarray(arr, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParameterDomainError(f"{name} contains non-finite entries")
    bad = np.argwhere((arr < 0.0) | (arr > 1.0))
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise ParameterDomainError(
            f"{name}{list(idx)} = {arr[idx]!r} is not a probability in [0, 1]"
        )


@dataclass(frozen=True)
class Intervention:
    """Joint intervention on the arm ``a`` and the message ``m`` (-1 = blinded)."""

    a: int
    m: int = -1

    def __post_init__(self):
        if self.a not in ARMS:
            raise ParameterDomainError(f"arm must be 0 or 1, got {self.a!r}")
        if self.m not in MESSAGES:
            raise ParameterDomainError(f"message must be -1, 0 or 1, got {self.m!r}")


@dataclass(frozen=True, eq=False)
class DiscreteScm:
    """Structural causal model given by conditional probability tables.

    Parameters
    ----------
    s_cpt : array of shape (2, n_u, n_l) or None
        Side-effect probabilities.  ``None`` means the model has no side-effect
        node; S is then fixed at 0 and never appears in simulated data.
    b_cpt : array of shape (2, 2, n_u, n_l)
        Belief probabilities under blinding (M=-1).
    y_cpt : array of shape (2, 2, 2, n_u, n_l) or (2, 2, n_u, n_l)
        Outcome probabilities.  The 4-axis form omits the S axis and is
        broadcast over it.
    p_u : float or None
        Marginal Pr(U=1) of the binary latent node, or ``None`` for no latent.
    l_probs : sequence of float or None
        Marginal distribution of the categorical covariate, or ``None``.
    """

    s_cpt: np.ndarray | None
    b_cpt: np.ndarray
    y_cpt: np.ndarray
    p_u: float | None = None
    l_probs: np.ndarray | None = None
    name: str = field(default="scm", compare=False)

    def __post_init__(self):
        if self.p_u is not None:
            if not 0.0 <= float(self.p_u) <= 1.0:
                raise ParameterDomainError(f"p_u = {self.p_u!r} is not in [0, 1]")
            object.__setattr__(self, "p_u", float(self.p_u))
        n_u = self.n_u

        if self.l_probs is not None:
            l_probs = np.asarray(self.l_probs, dtype=float).ravel()
            if l_probs.size == 0:
                raise ParameterDomainError("l_probs must have at least one category")
            _check_probs("l_probs", l_probs)
            if abs(l_probs.sum() - 1.0) > _NORM_TOL:
                raise ParameterDomainError(
                    f"l_probs sum to {l_probs.sum()!r}, expected 1 within {_NORM_TOL}"
                )
            object.__setattr__(self, "l_probs", _frozen(l_probs))
        n_l = self.n_l

        if self.s_cpt is not None:
            s = np.asarray(self.s_cpt, dtype=float)
            if s.shape != (2, n_u, n_l):
                raise ParameterDomainError(
                    f"s_cpt has shape {s.shape}, expected {(2, n_u, n_l)}"
                )
            _check_probs("s_cpt", s)
            object.__setattr__(self, "s_cpt", _frozen(s))

        b = np.asarray(self.b_cpt, dtype=float)
        if b.shape != (2, 2, n_u, n_l):
            raise ParameterDomainError(
                f"b_cpt has shape {b.shape}, expected {(2, 2, n_u, n_l)}"
            )
        _check_probs("b_cpt", b)
        object.__setattr__(self, "b_cpt", _frozen(b))

        y = np.asarray(self.y_cpt, dtype=float)
        if y.shape == (2, 2, n_u, n_l):
            y = np.broadcast_to(y[:, None], (2, 2, 2, n_u, n_l))
        if y.shape != (2, 2, 2, n_u, n_l):
            raise ParameterDomainError(
                f"y_cpt has shape {y.shape}, expected {(2, 2, 2, n_u, n_l)} "
                f"or {(2, 2, n_u, n_l)}"
            )
        _check_probs("y_cpt", y)
        object.__setattr__(self, "y_cpt", _frozen(y))

    @property
    def has_u(self):
        return self.p_u is not None

    @property
    def has_l(self):
        return self.l_probs is not None

    @property
    def has_s(self):
        return self.s_cpt is not None

    @property
    def n_u(self):
        return 2 if self.has_u else 1

    @property
    def n_l(self):
        return 1 if self.l_probs is None else len(self.l_probs)

    def u_marginal(self):
        if not self.has_u:
            return np.ones(1)
        return np.array([1.0 - self.p_u, self.p_u])

    def l_marginal(self):
        if not self.has_l:
            return np.ones(1)
        return np.asarray(self.l_probs)

    def s_table(self):
        """Pr(S=1 | a, u, l) with S pinned at 0 when the node is absent."""
        if self.has_s:
            return self.s_cpt
        return np.zeros((2, self.n_u, self.n_l))

    def to_dict(self):
        """Explicit-CPT JSON representation."""
        out = {}
        if self.has_u:
            out["p_u"] = self.p_u
        if self.has_l:
            out["l_probs"] = self.l_probs.tolist()
        out["s_cpt"] = None if self.s_cpt is None else self.s_cpt.tolist()
        out["b_cpt"] = self.b_cpt.tolist()
        out["y_cpt"] = self.y_cpt.tolist()
        return out

    def fingerprint(self):
        """Short stable hash of the model's tables."""
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, DiscreteScm):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.fingerprint())


@dataclass(frozen=True, eq=False)
class JointTable:
    """Exact joint law of (U, L, S, B, Y) under an intervention on (A, M).

    ``mass[u, l, s, b, y]`` holds the probability of that configuration.
    """

    a: int
    m: int
    mass: np.ndarray

    def total(self):
        return float(self.mass.sum())

    def prob(self, **fixed):
        """Probability of the event given by keyword values, e.g. ``prob(b=1, y=1)``."""
        index = []
        for ax in _AXES:
            value = fixed.pop(ax, None)
            index.append(slice(None) if value is None else value)
        if fixed:
            raise KeyError(f"unknown variables {sorted(fixed)}")
        return float(self.mass[tuple(index)].sum())

    def conditional(self, event, given):
        """Pr(event | given) for dicts of variable values; NaN on a null event."""
        denom = self.prob(**given)
        if denom == 0.0:
            return float("nan")
        return self.prob(**{**given, **event}) / denom

    def marginal(self, *names):
        """Marginal table over ``names`` (in the canonical u, l, s, b, y order)."""
        drop = tuple(i for i, ax in enumerate(_AXES) if ax not in names)
        return self.mass.sum(axis=drop)

    def items(self):
        """Yield ((u, l, a, s, b, y), mass) for every configuration."""
        for idx in itertools.product(*(range(k) for k in self.mass.shape)):
            u, l, s, b, y = idx
            yield (u, l, self.a, s, b, y), float(self.mass[idx])


def joint_distribution(scm, iv):
    """Exact joint over (u, l, s, b, y) with A set to ``iv.a`` and M to ``iv.m``."""
    a, m = iv.a, iv.m
    pu = scm.u_marginal()[:, None]                       # (u, 1)
    pl = scm.l_marginal()[None, :]                       # (1, l)
    s1 = scm.s_table()[a]                                # (u, l)
    ps = np.stack([1.0 - s1, s1], axis=-1)               # (u, l, s)
    if m == -1:
        b1 = np.moveaxis(scm.b_cpt[a], 0, -1)            # (u, l, s)
        pb = np.stack([1.0 - b1, b1], axis=-1)           # (u, l, s, b)
    else:
        pb = np.zeros((scm.n_u, scm.n_l, 2, 2))
        pb[..., m] = 1.0
    y1 = np.moveaxis(scm.y_cpt[a], (0, 1), (2, 3))       # (u, l, s, b)
    py = np.stack([1.0 - y1, y1], axis=-1)               # (u, l, s, b, y)
    mass = (pu * pl)[:, :, None, None, None] * ps[..., None, None] * pb[..., None] * py
    mass.setflags(write=False)
    return JointTable(a=a, m=m, mass=mass)


def potential_outcome_mean(scm, a, m):
    """E(Y^{a,m}) by marginalising the interventional joint."""
    return joint_distribution(scm, Intervention(a, m)).prob(y=1)


def belief_probability(scm, a):
    """Pr(B^{a, m=-1} = 1)."""
    return joint_distribution(scm, Intervention(a, -1)).prob(b=1)


# --------------------------------------------------------------------------
# Constructors for the two reference data-generating mechanisms
# --------------------------------------------------------------------------

def build_dgm1(rr_b, ve_t):
    """Broken-blinding illustration with no latent, covariate or side effect.

    Placebo recipients believe they were vaccinated with probability 0.5 and
    vaccine recipients with probability ``0.5 * rr_b``.  A message of
    vaccination doubles the outcome risk in both arms.
    """
    rr_b = float(rr_b)
    ve_t = float(ve_t)
    if not 1.0 <= rr_b <= 2.0:
        raise ParameterDomainError(f"rr_b = {rr_b!r} must lie in [1, 2]")
    if not ve_t < 1.0:
        raise ParameterDomainError(f"ve_t = {ve_t!r} must be < 1")
    y11 = 0.01 * (1.0 - ve_t)
    if y11 > 1.0:
        raise ParameterDomainError(
            f"E(Y^(1,1)) = 0.01 * (1 - ve_t) = {y11!r} exceeds 1"
        )
    b_cpt = np.empty((2, 2, 1, 1))
    b_cpt[0] = 0.5
    b_cpt[1] = 0.5 * rr_b
    y_cpt = np.empty((2, 2, 1, 1))
    y_cpt[0, 0] = 0.01
    y_cpt[0, 1] = 0.02
    y_cpt[1, 0] = 0.005 * (1.0 - ve_t)
    y_cpt[1, 1] = y11
    return DiscreteScm(s_cpt=None, b_cpt=b_cpt, y_cpt=y_cpt, name="dgm1")


@dataclass(frozen=True)
class Dgm2Params:
    """Influenza-trial mechanism: side effects drive belief under blinding."""

    p_y00: float = 0.1395
    ve_t: float = 0.3
    ve0: float = 0.40
    ve1: float = 0.60
    p_s_a1: float = 0.50
    p_s_a0: float = 0.21
    p_b_s1: float = 0.70
    p_b_s0: float = 0.18

    def outcome_means(self):
        """Return the four E(Y^{a,m}) for a, m in {0, 1} as a dict keyed (a, m)."""
        if self.ve1 == 1.0:
            raise ParameterDomainError("ve1 = 1 makes E(Y^(0,1)) undefined")
        y11 = (1.0 - self.ve_t) * self.p_y00
        return {
            (0, 0): self.p_y00,
            (1, 0): (1.0 - self.ve0) * self.p_y00,
            (1, 1): y11,
            (0, 1): y11 / (1.0 - self.ve1),
        }


def build_dgm2(params=None, **overrides):
    """Side-effect mechanism; the belief under blinding depends on S only."""
    if params is None:
        params = Dgm2Params(**overrides)
    elif overrides:
        params = Dgm2Params(**{**params.__dict__, **overrides})
    labelled = {
        "p_y00": params.p_y00,
        "Pr(S=1|A=1)": params.p_s_a1,
        "Pr(S=1|A=0)": params.p_s_a0,
        "Pr(B=1|S=1)": params.p_b_s1,
        "Pr(B=1|S=0)": params.p_b_s0,
    }
    for key, (a, m) in {"E(Y^(0,0))": (0, 0), "E(Y^(1,0))": (1, 0),
                        "E(Y^(1,1))": (1, 1), "E(Y^(0,1))": (0, 1)}.items():
        labelled[key] = params.outcome_means()[(a, m)]
    for key, value in labelled.items():
        if not (np.isfinite(value) and 0.0 <= value <= 1.0):
            raise ParameterDomainError(f"{key} = {value!r} is not a probability in [0, 1]")

    e_y = params.outcome_means()
    s_cpt = np.array([params.p_s_a0, params.p_s_a1]).reshape(2, 1, 1)
    b_cpt = np.empty((2, 2, 1, 1))
    b_cpt[:, 0] = params.p_b_s0
    b_cpt[:, 1] = params.p_b_s1
    y_cpt = np.empty((2, 2, 1, 1))
    for (a, b), value in e_y.items():
        y_cpt[a, b] = value
    return DiscreteScm(s_cpt=s_cpt, b_cpt=b_cpt, y_cpt=y_cpt, name="dgm2")


# --------------------------------------------------------------------------
# Randomised scenario models for the two causal structures
# --------------------------------------------------------------------------

def _separated_pair(rng, low, high, min_gap):
    while True:
        x = rng.uniform(low, high, size=2)
        if abs(x[1] - x[0]) >= min_gap:
            return x


def random_confounded_belief_scm(rng, min_effect=0.1):
    """Latent U affects both belief and outcome (U -> B, U -> Y); no S, no L.

    Both ``|Pr(B=1|a,u=1) - Pr(B=1|a,u=0)|`` and
    ``|Pr(Y=1|a,b,u=1) - Pr(Y=1|a,b,u=0)|`` are at least ``min_effect``.
    """
    p_u = rng.uniform(0.2, 0.8)
    b_cpt = np.empty((2, 2, 2, 1))
    for a in ARMS:
        pair = _separated_pair(rng, 0.05, 0.95, min_effect)
        b_cpt[a, :, :, 0] = pair          # identical across the (absent) s axis
    y_cpt = np.empty((2, 2, 2, 1))
    for a, b in itertools.product(ARMS, ARMS):
        y_cpt[a, b, :, 0] = _separated_pair(rng, 0.02, 0.6, min_effect)
    return DiscreteScm(s_cpt=None, b_cpt=b_cpt, y_cpt=y_cpt, p_u=p_u, name="u_b_y")


def random_side_effect_scm(rng, n_l=None, with_u=True):
    """Side effect S drives belief; latent U affects S and Y (U -> S, U -> Y).

    Belief depends on (A, S, L) but not on U, and S has a direct arrow into Y.
    """
    if n_l is None:
        n_l = int(rng.integers(1, 4))
    n_u = 2 if with_u else 1
    l_probs = rng.dirichlet(np.ones(n_l)) if n_l > 1 else None
    s_cpt = rng.uniform(0.1, 0.9, size=(2, n_u, n_l))
    b_base = rng.uniform(0.05, 0.95, size=(2, 2, 1, n_l))
    b_cpt = np.broadcast_to(b_base, (2, 2, n_u, n_l))
    y_cpt = rng.uniform(0.02, 0.6, size=(2, 2, 2, n_u, n_l))
    return DiscreteScm(
        s_cpt=s_cpt,
        b_cpt=b_cpt,
        y_cpt=y_cpt,
        p_u=rng.uniform(0.2, 0.8) if with_u else None,
        l_probs=l_probs,
        name="s_b_u",
    )


def random_scm(rng, n_l=None):
    """Unrestricted random model with every node present."""
    if n_l is None:
        n_l = int(rng.integers(1, 4))
    l_probs = rng.dirichlet(np.ones(n_l)) if n_l > 1 else None
    return DiscreteScm(
        s_cpt=rng.uniform(0.05, 0.95, size=(2, 2, n_l)),
        b_cpt=rng.uniform(0.05, 0.95, size=(2, 2, 2, n_l)),
        y_cpt=rng.uniform(0.01, 0.9, size=(2, 2, 2, 2, n_l)),
        p_u=rng.uniform(0.1, 0.9),
        l_probs=l_probs,
        name="random",
    )


# --------------------------------------------------------------------------
# Dismissible component conditions in the induced six-arm trial
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    assumption: str
    cell: dict
    discrepancy: float


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of checking the dismissible component conditions exactly."""

    y_dismissible: bool
    ys_dismissible: bool
    violations: tuple
    max_discrepancy_y: float
    max_discrepancy_ys: float
    tolerance: float

    def holds(self, condition):
        return {"y_dismissible": self.y_dismissible,
                "ys_dismissible": self.ys_dismissible}[condition]


def check_dismissibility(scm, tol=1e-12):
    """Check Y _||_ M | L, A, B and the pair (Y _||_ M | L, A, S, B; S _||_ M | L, A).

    Each condition is evaluated over the six-arm law in which A and M are
    assigned independently.  Cells with zero probability under either
    message are skipped (the conditional is undefined there).
    """
    joints = {(a, m): joint_distribution(scm, Intervention(a, m))
              for a in ARMS for m in MESSAGES}
    violations = []
    max3 = 0.0
    max7 = 0.0

    for a, b, l in itertools.product(ARMS, ARMS, range(scm.n_l)):
        cell = {"l": l, "a": a, "b": b}
        blind = joints[a, -1].conditional({"y": 1}, {"l": l, "b": b})
        told = joints[a, b].conditional({"y": 1}, {"l": l, "b": b})
        if np.isnan(blind) or np.isnan(told):
            continue
        gap = abs(blind - told)
        max3 = max(max3, gap)
        if gap > tol:
            violations.append(Violation("y_dismissible", cell, gap))

    for a, s, b, l in itertools.product(ARMS, ARMS, ARMS, range(scm.n_l)):
        cell = {"l": l, "a": a, "s": s, "b": b}
        blind = joints[a, -1].conditional({"y": 1}, {"l": l, "s": s, "b": b})
        told = joints[a, b].conditional({"y": 1}, {"l": l, "s": s, "b": b})
        if np.isnan(blind) or np.isnan(told):
            continue
        gap = abs(blind - told)
        max7 = max(max7, gap)
        if gap > tol:
            violations.append(Violation("ys_dismissible", cell, gap))

    for a, l in itertools.product(ARMS, range(scm.n_l)):
        side = [joints[a, m].conditional({"s": 1}, {"l": l}) for m in MESSAGES]
        side = [p for p in side if not np.isnan(p)]
        if not side:
            continue
        gap = max(side) - min(side)
        max7 = max(max7, gap)
        if gap > tol:
            violations.append(Violation("ys_dismissible", {"l": l, "a": a, "variable": "S"}, gap))

    return AssumptionReport(
        y_dismissible=max3 <= tol,
        ys_dismissible=max7 <= tol,
        violations=tuple(violations),
        max_discrepancy_y=max3,
        max_discrepancy_ys=max7,
        tolerance=tol,
    )


# --------------------------------------------------------------------------
# JSON documents
# --------------------------------------------------------------------------

def scm_from_dict(doc):
    """Build a model from an explicit-CPT mapping or a ``dgm1``/``dgm2`` block."""
    if not isinstance(doc, dict):
        raise ParameterDomainError("model document must be a JSON object")
    blocks = [k for k in ("dgm1", "dgm2") if k in doc]
    explicit = any(k in doc for k in ("b_cpt", "y_cpt", "s_cpt"))
    if len(blocks) + int(explicit) != 1:
        raise ParameterDomainError(
            "model document needs exactly one of 'dgm1', 'dgm2' or explicit CPTs"
        )
    if blocks == ["dgm1"]:
        block = doc["dgm1"] or {}
        unknown = set(block) - {"rr_b", "ve_t"}
        if unknown:
            raise ParameterDomainError(f"unknown dgm1 keys: {sorted(unknown)}")
        try:
            return build_dgm1(block["rr_b"], block["ve_t"])
        except KeyError as err:
            raise ParameterDomainError(f"dgm1 block is missing key {err.args[0]!r}") from None
    if blocks == ["dgm2"]:
        block = doc["dgm2"] or {}
        known = set(Dgm2Params.__dataclass_fields__)
        unknown = set(block) - known
        if unknown:
            raise ParameterDomainError(f"unknown dgm2 keys: {sorted(unknown)}")
        return build_dgm2(Dgm2Params(**{k: float(v) for k, v in block.items()}))
    for key in ("b_cpt", "y_cpt"):
        if key not in doc:
            raise ParameterDomainError(f"explicit model is missing {key!r}")
    return DiscreteScm(
        s_cpt=doc.get("s_cpt"),
        b_cpt=doc["b_cpt"],
        y_cpt=doc["y_cpt"],
        p_u=doc.get("p_u"),
        l_probs=doc.get("l_probs"),
        name=doc.get("name", "scm"),
    )


def load_scm(path):
    with open(path) as fh:
        return scm_from_dict(json.load(fh))


def dump_scm(scm, path):
    with open(path, "w") as fh:
        json.dump(scm.to_dict(), fh, indent=2)
