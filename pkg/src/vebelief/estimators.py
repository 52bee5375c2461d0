"""Estimators of E(Y^{a,m}) and VE contrasts from blinded trial data.

The estimators follow the scikit-learn estimator protocol: hyperparameters
go to ``__init__``, ``fit(X, y=None)`` takes a :class:`TrialDataset` (or a
DataFrame with columns ``a, b, y`` and optionally ``s, l``) and stores the
result in ``estimate_``.  Thin functions such as :func:`estimate_mean_plugin`
wrap them and return :class:`EstimateResult` records.

Nuisance quantities are estimated nonparametrically within the discrete
strata unless a parametric outcome model is requested.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .dataset import check_trial_data
from .exceptions import (
    EstimationError,
    NotAssessableError,
    PositivityError,
    UndefinedEstimandError,
    UnstableBootstrapError,
    VEBeliefError,
)
from .logistic import IRLSLogisticRegression
from .rng import BOOTSTRAP_DOMAIN, stream

DEFAULT_ESTIMANDS = ("VE(-1)", "VE(0)", "VE(1)", "VE_t", "VE(-1,S=0)", "VE(-1,S=1)")


@dataclass
class EstimateResult:
    """Point estimate with optional bootstrap uncertainty for one estimand."""

    estimand: str
    point: float
    boot_se: float | None = None
    ci: tuple | None = None
    n_boot: int = 0
    n_failed_boot: int = 0
    cell_diagnostics: dict = field(default_factory=dict)

    @property
    def ci_excludes_point(self):
        if self.ci is None:
            return False
        return not (self.ci[0] <= self.point <= self.ci[1])


class _Cells:
    """Counts and outcome sums over the (l, a, s, b) strata of a dataset."""

    def __init__(self, ds):
        l, n_l = ds.l_codes()
        s = ds.s_or_zero().astype(np.int64)
        key = ((l * 2 + ds.a) * 2 + s) * 2 + ds.b
        size = n_l * 8
        self.n = ds.n
        self.n_l = n_l
        self.l = l
        self.count = np.bincount(key, minlength=size).reshape(n_l, 2, 2, 2)
        self.ysum = np.bincount(key, weights=ds.y, minlength=size).reshape(n_l, 2, 2, 2)

    def p_l(self):
        return self.count.sum(axis=(1, 2, 3)) / self.n

    def require(self, a, m, adjust_for_s):
        """Raise if a stratum the identification formula needs is empty."""
        if adjust_for_s:
            for l, s in itertools.product(range(self.n_l), (0, 1)):
                if self.count[l, a, s, m] == 0:
                    raise PositivityError(
                        f"no records with L={l}, A={a}, S={s}, B={m}",
                        cell={"l": l, "a": a, "s": s, "b": m},
                    )
        else:
            for l in range(self.n_l):
                if self.count[l, a, :, m].sum() == 0:
                    raise PositivityError(
                        f"no records with L={l}, A={a}, B={m}",
                        cell={"l": l, "a": a, "b": m},
                    )

    def diagnostics(self, a, m, adjust_for_s):
        out = {}
        for l in range(self.n_l):
            if adjust_for_s:
                for s in (0, 1):
                    out[f"l={l},a={a},s={s},b={m}"] = int(self.count[l, a, s, m])
            else:
                out[f"l={l},a={a},b={m}"] = int(self.count[l, a, :, m].sum())
        return out


def _resolve_adjust(ds, adjust_for_s):
    if adjust_for_s == "auto":
        return ds.has_s
    if adjust_for_s:
        ds.require_s()
    return bool(adjust_for_s)


def _check_am(a, m):
    if a not in (0, 1):
        raise ValueError(f"a must be 0 or 1, got {a!r}")
    if m not in (0, 1):
        raise ValueError(f"m must be 0 or 1, got {m!r}")


# --------------------------------------------------------------------------
# Mean estimators
# --------------------------------------------------------------------------

class PluginMean(BaseEstimator):
    """Empirical g-formula: standardise stratum means over P(L) (and P(S | L, A))."""

    def __init__(self, a=1, m=1, adjust_for_s=True):
        self.a = a
        self.m = m
        self.adjust_for_s = adjust_for_s

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        _check_am(self.a, self.m)
        adjust = _resolve_adjust(ds, self.adjust_for_s)
        a, m = self.a, self.m
        cells = _Cells(ds)
        cells.require(a, m, adjust)
        p_l = cells.p_l()
        if adjust:
            n_la = cells.count[:, a].sum(axis=(1, 2))
            p_s = cells.count[:, a].sum(axis=2) / n_la[:, None]
            mu = cells.ysum[:, a, :, m] / cells.count[:, a, :, m]
            value = float(np.sum(p_l * np.sum(p_s * mu, axis=1)))
        else:
            mu = cells.ysum[:, a, :, m].sum(axis=1) / cells.count[:, a, :, m].sum(axis=1)
            value = float(np.sum(p_l * mu))
        self.estimate_ = value
        self.cell_counts_ = cells.diagnostics(a, m, adjust)
        self.n_samples_ = ds.n
        return self


class IPWMean(BaseEstimator):
    """Inverse-probability-weighted estimator with saturated nuisance models.

    The default is the unnormalised (Horvitz-Thompson) mean over all ``n``
    records.  ``normalize=True`` divides by the sum of weights instead.
    ``Pr(A=a | L)`` is always estimated from the data.
    """

    def __init__(self, a=1, m=1, adjust_for_s=True, normalize=False):
        self.a = a
        self.m = m
        self.adjust_for_s = adjust_for_s
        self.normalize = normalize

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        _check_am(self.a, self.m)
        adjust = _resolve_adjust(ds, self.adjust_for_s)
        a, m = self.a, self.m
        cells = _Cells(ds)
        cells.require(a, m, adjust)
        count = cells.count
        n_l = count.sum(axis=(1, 2, 3))
        n_la = count[:, a].sum(axis=(1, 2))
        pr_a = n_la / n_l                                         # Pr(A=a | L=l)
        l = cells.l
        s = ds.s_or_zero().astype(np.int64)
        if adjust:
            pr_b = count[:, a, :, m] / count[:, a].sum(axis=2)    # Pr(B=m | L, S, A=a)
            denom = pr_b[l, s] * pr_a[l]
        else:
            pr_b = count[:, a, :, m].sum(axis=1) / n_la           # Pr(B=m | L, A=a)
            denom = pr_b[l] * pr_a[l]
        hit = (ds.a == a) & (ds.b == m)
        if np.any(denom[hit] <= 0):
            raise PositivityError("zero estimated weight denominator", cell={"a": a, "b": m})
        weights = np.zeros(ds.n)
        weights[hit] = 1.0 / denom[hit]
        total = float(np.sum(weights * ds.y))
        self.weights_ = weights
        self.estimate_ = total / (weights.sum() if self.normalize else ds.n)
        self.cell_counts_ = cells.diagnostics(a, m, adjust)
        self.n_samples_ = ds.n
        return self


def _expand_term(term, cols, n_levels):
    factors = term.split(":")
    pieces = [np.ones(len(cols["A"]))]
    for f in factors:
        if f == "L":
            dummies = [(cols["L"] == k).astype(float) for k in range(1, n_levels)]
            pieces = [p * d for p in pieces for d in dummies] if dummies else []
        elif f in ("A", "B", "S"):
            pieces = [p * cols[f] for p in pieces]
        else:
            raise ValueError(f"unknown regressor {f!r} in term {term!r}")
    return pieces


def outcome_design(terms, A, B, S, L, n_levels):
    """Design matrix with an intercept followed by the expanded model terms."""
    cols = {"A": np.asarray(A, float), "B": np.asarray(B, float),
            "S": np.asarray(S, float), "L": np.asarray(L)}
    mats = [np.ones(len(cols["A"]))]
    for term in terms:
        mats.extend(_expand_term(term, cols, n_levels))
    return np.column_stack(mats)


class OutcomeRegressionMean(BaseEstimator):
    """Outcome-regression (parametric g-formula) estimator of E(Y^{a,m}).

    ``model="saturated"`` uses stratum means, the closed-form MLE of the
    saturated model.  Otherwise ``model`` is a list of terms over
    ``A, B, S, L`` with ``:`` marking interactions (e.g. ``["A", "B", "A:B"]``),
    fitted as a logistic regression.

    ``form="standardize"`` averages ``sum_s E(Y | L_i, a, s, m) Pr(s | L_i, a)``
    over all records; ``form="arm_average"`` averages ``E(Y | L_i, a, S_i, m)``
    over the records with ``A_i = a``.  The two forms coincide when there is
    no covariate; with L, ``arm_average`` uses the arm's empirical L mix.
    """

    def __init__(self, a=1, m=1, adjust_for_s=True, model="saturated", form="standardize"):
        self.a = a
        self.m = m
        self.adjust_for_s = adjust_for_s
        self.model = model
        self.form = form

    def _predictor(self, ds, cells, adjust):
        a, m = self.a, self.m
        if self.model == "saturated":
            cells.require(a, m, adjust)
            if adjust:
                table = cells.ysum[:, a, :, m] / cells.count[:, a, :, m]
                return lambda l, s: table[l, s]
            table = cells.ysum[:, a, :, m].sum(axis=1) / cells.count[:, a, :, m].sum(axis=1)
            return lambda l, s: table[l]

        terms = list(self.model)
        if not adjust and any("S" in t.split(":") for t in terms):
            raise ValueError("model uses S but adjust_for_s is False")
        if any("S" in t.split(":") for t in terms):
            ds.require_s()
        S = ds.s_or_zero()
        X = outcome_design(terms, ds.a, ds.b, S, cells.l, cells.n_l)
        fit = IRLSLogisticRegression().fit(X, ds.y)
        if not fit.converged_:
            raise EstimationError(
                f"outcome model {terms} did not converge after {fit.n_iter_} iterations "
                "(possible separation)"
            )
        self.outcome_model_ = fit

        def predict(l, s):
            l = np.atleast_1d(l)
            s = np.broadcast_to(s, l.shape)
            Xp = outcome_design(terms, np.full(l.shape, a), np.full(l.shape, m), s, l, cells.n_l)
            return fit.predict_proba(Xp)[:, 1]

        return predict

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        _check_am(self.a, self.m)
        if self.form not in ("standardize", "arm_average"):
            raise ValueError(f"form must be 'standardize' or 'arm_average', got {self.form!r}")
        adjust = _resolve_adjust(ds, self.adjust_for_s)
        a = self.a
        cells = _Cells(ds)
        predict = self._predictor(ds, cells, adjust)
        l = cells.l
        if self.form == "standardize":
            if adjust:
                n_la = cells.count[:, a].sum(axis=(1, 2))
                if np.any(n_la == 0):
                    k = int(np.flatnonzero(n_la == 0)[0])
                    raise PositivityError(f"no records with L={k}, A={a}", cell={"l": k, "a": a})
                p_s = cells.count[:, a].sum(axis=2) / n_la[:, None]
                per_record = sum(predict(l, s) * p_s[l, s] for s in (0, 1))
            else:
                per_record = predict(l, 0)
            value = float(np.mean(per_record))
        else:
            in_arm = ds.a == a
            if not np.any(in_arm):
                raise PositivityError(f"no records with A={a}", cell={"a": a})
            s = ds.s_or_zero().astype(np.int64)
            per_record = predict(l[in_arm], s[in_arm] if adjust else 0)
            value = float(np.mean(per_record))
        self.estimate_ = value
        self.cell_counts_ = cells.diagnostics(self.a, self.m, adjust)
        self.n_samples_ = ds.n
        return self


# --------------------------------------------------------------------------
# VE contrasts
# --------------------------------------------------------------------------

def _ve_ratio(num, den, label):
    if den == 0.0:
        raise UndefinedEstimandError(f"{label}: zero denominator")
    return 1.0 - num / den


class NaiveVE(BaseEstimator):
    """Blinded-trial VE(-1): one minus the ratio of arm-specific attack rates."""

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        rates = []
        for a in (0, 1):
            arm = ds.a == a
            if not np.any(arm):
                raise PositivityError(f"arm A={a} has no records", cell={"a": a})
            rates.append(float(ds.y[arm].mean()))
        self.rates_ = tuple(rates)
        self.estimate_ = _ve_ratio(rates[1], rates[0], "VE(-1)")
        return self


class ConditionalVE(BaseEstimator):
    """1 - E(Y | A=1, S=s) / E(Y | A=0, S=s); not a causal contrast in general."""

    def __init__(self, s=0):
        self.s = s

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        ds.require_s()
        rates = []
        for a in (0, 1):
            cell = (ds.a == a) & (ds.s == self.s)
            if not np.any(cell):
                raise PositivityError(f"no records with A={a}, S={self.s}", cell={"a": a, "s": self.s})
            rates.append(float(ds.y[cell].mean()))
        if rates[0] == 0.0:
            raise PositivityError(
                f"no events among A=0, S={self.s}; conditional VE undefined",
                cell={"a": 0, "s": self.s},
            )
        self.rates_ = tuple(rates)
        self.estimate_ = 1.0 - rates[1] / rates[0]
        return self


_MEAN_ESTIMATORS = {
    "plugin": PluginMean,
    "ipw": IPWMean,
    "or": OutcomeRegressionMean,
}

_RATIO_ESTIMANDS = {
    "VE(0)": ((1, 0), (0, 0)),
    "VE(1)": ((1, 1), (0, 1)),
    "VE_t": ((1, 1), (0, 0)),
    "VE_m(0)": ((0, 1), (0, 0)),
    "VE_m(1)": ((1, 1), (1, 0)),
}


def parse_mean_label(label):
    """Return (a, m) for labels of the form ``E(Y^(a,m))`` or ``E(Y^(a=1,m=0))``."""
    inner = label.strip()
    if not (inner.startswith("E(Y^(") and inner.endswith("))")):
        return None
    body = inner[len("E(Y^("):-2].replace("a=", "").replace("m=", "")
    try:
        a, m = (int(x) for x in body.split(","))
    except ValueError:
        return None
    return a, m


class VaccineEfficacy(BaseEstimator):
    """Estimate a named VE contrast (or a single mean) from trial data.

    ``estimand`` is one of ``VE(-1)``, ``VE(0)``, ``VE(1)``, ``VE_t``,
    ``VE_m(0)``, ``VE_m(1)``, ``VE(-1,S=0)``, ``VE(-1,S=1)`` or ``E(Y^(a,m))``.
    ``method`` selects the mean estimator (``plugin``, ``ipw`` or ``or``) for
    the contrasts built from E(Y^{a,m}).  ``adjust_for_s="auto"`` adjusts for
    S whenever the data carry it.
    """

    def __init__(self, estimand="VE(1)", method="plugin", adjust_for_s="auto"):
        self.estimand = estimand
        self.method = method
        self.adjust_for_s = adjust_for_s

    def _mean(self, ds, a, m):
        try:
            cls = _MEAN_ESTIMATORS[self.method]
        except KeyError:
            raise ValueError(f"unknown method {self.method!r}") from None
        est = cls(a=a, m=m, adjust_for_s=self.adjust_for_s).fit(ds)
        self.cell_counts_.update(est.cell_counts_)
        return est.estimate_

    def fit(self, X, y=None):
        ds = check_trial_data(X, y)
        label = self.estimand
        self.cell_counts_ = {}
        if label == "VE(-1)":
            self.estimate_ = NaiveVE().fit(ds).estimate_
        elif label in ("VE(-1,S=0)", "VE(-1,S=1)"):
            self.estimate_ = ConditionalVE(s=int(label[-2])).fit(ds).estimate_
        elif label in _RATIO_ESTIMANDS:
            (a1, m1), (a0, m0) = _RATIO_ESTIMANDS[label]
            num = self._mean(ds, a1, m1)
            den = self._mean(ds, a0, m0)
            self.means_ = {(a1, m1): num, (a0, m0): den}
            self.estimate_ = _ve_ratio(num, den, label)
        elif parse_mean_label(label) is not None:
            a, m = parse_mean_label(label)
            self.estimate_ = self._mean(ds, a, m)
        else:
            raise ValueError(f"unknown estimand {label!r}")
        return self


def estimand_estimator(label, method="plugin", adjust_for_s="auto"):
    """Return ``ds -> float`` computing the named estimand."""
    params = {"estimand": label, "method": method, "adjust_for_s": adjust_for_s}

    def run(ds):
        # fresh instance per call: fit mutates, and callers may run in threads
        return VaccineEfficacy(**params).fit(ds).estimate_

    run.label = label
    return run


# --------------------------------------------------------------------------
# Functional interface
# --------------------------------------------------------------------------

def estimate_naive_ve(ds):
    est = NaiveVE().fit(ds)
    return EstimateResult("VE(-1)", est.estimate_)


def estimate_mean_plugin(ds, a, m, adjust_for_s=True):
    est = PluginMean(a=a, m=m, adjust_for_s=adjust_for_s).fit(ds)
    return EstimateResult(f"E(Y^(a={a},m={m}))", est.estimate_, cell_diagnostics=est.cell_counts_)


def estimate_mean_ipw(ds, a, m, adjust_for_s=True, normalize=False):
    est = IPWMean(a=a, m=m, adjust_for_s=adjust_for_s, normalize=normalize).fit(ds)
    return EstimateResult(f"E(Y^(a={a},m={m}))", est.estimate_, cell_diagnostics=est.cell_counts_)


def estimate_conditional_ve(ds, s):
    est = ConditionalVE(s=s).fit(ds)
    return EstimateResult(f"VE(-1,S={s})", est.estimate_)


def estimate_or_parametric(ds, a, m, model_spec="saturated", form="standardize", adjust_for_s=True):
    try:
        est = OutcomeRegressionMean(
            a=a, m=m, adjust_for_s=adjust_for_s, model=model_spec, form=form
        ).fit(ds)
    except EstimationError as err:
        raise EstimationError(f"E(Y^(a={a},m={m})) outcome regression: {err}") from err
    return EstimateResult(f"E(Y^(a={a},m={m}))", est.estimate_, cell_diagnostics=est.cell_counts_)


# --------------------------------------------------------------------------
# Bootstrap
# --------------------------------------------------------------------------

def _as_callable(estimator):
    if hasattr(estimator, "fit"):
        from sklearn.base import clone

        def run(ds):
            return clone(estimator).fit(ds).estimate_
        return run
    return estimator


def bootstrap(ds, estimator, n_boot=2000, seed=0, alpha=0.05, label=None, threads=1):
    """Arm-stratified nonparametric bootstrap with a percentile interval.

    Each resample draws ``n0`` control and ``n1`` vaccine records with
    replacement.  Resample ``r`` uses its own random stream derived from
    ``(seed, r)``, so results do not depend on ``threads``.  Resamples on
    which the estimator fails are counted and excluded; more than half
    failing raises :class:`UnstableBootstrapError`.
    """
    if n_boot < 1:
        raise ValueError(f"n_boot must be >= 1, got {n_boot!r}")
    fn = _as_callable(estimator)
    point = fn(ds)
    arms = [np.flatnonzero(ds.a == a) for a in (0, 1)]

    def one(r):
        rng = stream(seed, BOOTSTRAP_DOMAIN, r)
        idx = np.concatenate([rng.choice(ix, size=ix.size, replace=True) for ix in arms])
        try:
            return float(fn(ds.take(idx)))
        except (VEBeliefError, ArithmeticError):
            return np.nan

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.array(list(pool.map(one, range(n_boot))))
    else:
        values = np.array([one(r) for r in range(n_boot)])
    ok = values[np.isfinite(values)]
    n_failed = int(n_boot - ok.size)
    if n_failed > n_boot / 2:
        raise UnstableBootstrapError(f"{n_failed} of {n_boot} bootstrap resamples failed")
    se = float(np.std(ok, ddof=1)) if ok.size > 1 else None
    lo, hi = np.percentile(ok, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return EstimateResult(
        estimand=label or getattr(estimator, "label", getattr(estimator, "estimand", "estimate")),
        point=float(point),
        boot_se=se,
        ci=(float(lo), float(hi)),
        n_boot=n_boot,
        n_failed_boot=n_failed,
    )
