"""Finite-sample trial simulation and Monte Carlo studies."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import TrialDataset
from .estimands import conditional_ve, ve, ve_behavioral, ve_total
from .estimators import estimand_estimator, parse_mean_label
from .exceptions import ConfigError, VEBeliefError
from .rng import SAMPLING_DOMAIN, check_seed, stream
from .scm import potential_outcome_mean


def sample_dataset(scm, n0, n1, master_seed, replicate=0):
    """Draw a blinded trial with exactly ``n0`` control and ``n1`` vaccine records.

    Variables are drawn in causal order (U, L, S, B, Y) under M = -1.  The
    output is a pure function of the arguments.
    """
    if n0 < 1 or n1 < 1:
        raise ValueError(f"arm sizes must be >= 1, got n0={n0}, n1={n1}")
    rng = stream(master_seed, SAMPLING_DOMAIN, replicate)
    n = n0 + n1
    a = np.repeat(np.array([0, 1], dtype=np.int64), [n0, n1])
    u = (rng.random(n) < scm.p_u).astype(np.int64) if scm.has_u else np.zeros(n, np.int64)
    if scm.has_l:
        l = rng.choice(scm.n_l, size=n, p=scm.l_marginal())
    else:
        l = np.zeros(n, np.int64)
    s = (rng.random(n) < scm.s_table()[a, u, l]).astype(np.int64)
    b = (rng.random(n) < scm.b_cpt[a, s, u, l]).astype(np.int64)
    y = (rng.random(n) < scm.y_cpt[a, s, b, u, l]).astype(np.int64)
    return TrialDataset(
        a=a,
        b=b,
        y=y,
        s=s if scm.has_s else None,
        l=l if scm.has_l else None,
        master_seed=int(master_seed),
        replicate=int(replicate),
        scm_fingerprint=scm.fingerprint(),
        meta={"n0": n0, "n1": n1},
    )


def estimand_truth(label, scm):
    """Exact population value targeted by the estimator named ``label``."""
    if label == "VE(-1)":
        return ve(scm, -1)
    if label == "VE(0)":
        return ve(scm, 0)
    if label == "VE(1)":
        return ve(scm, 1)
    if label == "VE_t":
        return ve_total(scm)
    if label in ("VE_m(0)", "VE_m(1)"):
        return ve_behavioral(scm, int(label[-2]))
    if label in ("VE(-1,S=0)", "VE(-1,S=1)"):
        return conditional_ve(scm, int(label[-2]))
    parsed = parse_mean_label(label)
    if parsed is not None:
        return potential_outcome_mean(scm, *parsed)
    raise ValueError(f"unknown estimand {label!r}")


@dataclass
class McEntry:
    label: str
    truth: float | None
    mean: float | None
    sd: float | None
    bias: float | None
    n_ok: int
    n_failed: int


@dataclass
class McSummary:
    """Per-estimator aggregates over Monte Carlo replications.

    ``estimates`` holds the raw replicate-by-estimator matrix with NaN for
    failed replications.
    """

    entries: list
    replications: int
    n0: int
    n1: int
    master_seed: int
    estimates: np.ndarray = field(repr=False, default=None)

    def __getitem__(self, label):
        for e in self.entries:
            if e.label == label:
                return e
        raise KeyError(label)

    def means(self):
        return {e.label: e.mean for e in self.entries}


def _resolve_estimators(estimator_set, method, adjust_for_s):
    out = []
    for item in estimator_set:
        if callable(item):
            out.append((getattr(item, "label", getattr(item, "__name__", "estimator")), item))
        else:
            out.append((item, estimand_estimator(item, method=method, adjust_for_s=adjust_for_s)))
    return out


def run_mc(scm, n0, n1, replications, estimator_set, master_seed,
           method="plugin", adjust_for_s="auto", threads=1):
    """Simulate ``replications`` trials and summarise each estimator.

    ``estimator_set`` holds estimand labels (see
    :class:`~vebelief.estimators.VaccineEfficacy`) or callables ``ds -> float``
    carrying a ``label`` attribute.  Replication ``r`` samples from the stream
    ``(master_seed, r)``; aggregation is in replicate order, so the summary is
    identical for any ``threads``.
    """
    if not estimator_set:
        raise ConfigError("estimator_set is empty")
    if replications < 1:
        raise ConfigError(f"replications must be >= 1, got {replications}")
    check_seed(master_seed)
    estimators = _resolve_estimators(estimator_set, method, adjust_for_s)

    def one(r):
        ds = sample_dataset(scm, n0, n1, master_seed, r)
        row = np.empty(len(estimators))
        for j, (_, fn) in enumerate(estimators):
            try:
                row[j] = fn(ds)
            except (VEBeliefError, ArithmeticError):
                row[j] = np.nan
        return row

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(replications)))
    else:
        rows = [one(r) for r in range(replications)]
    estimates = np.vstack(rows)

    entries = []
    for j, (label, _) in enumerate(estimators):
        col = estimates[:, j]
        ok = col[np.isfinite(col)]
        try:
            truth = estimand_truth(label, scm)
        except (ValueError, VEBeliefError, ArithmeticError):
            truth = None
        mean = math.fsum(ok) / ok.size if ok.size else None
        sd = float(np.std(ok, ddof=1)) if ok.size > 1 else None
        entries.append(McEntry(
            label=label,
            truth=truth,
            mean=mean,
            sd=sd,
            bias=None if (mean is None or truth is None) else mean - truth,
            n_ok=int(ok.size),
            n_failed=int(col.size - ok.size),
        ))
    return McSummary(
        entries=entries,
        replications=replications,
        n0=n0,
        n1=n1,
        master_seed=int(master_seed),
        estimates=estimates,
    )
