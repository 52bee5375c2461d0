"""Shared fixtures and independent oracles.

The oracles below recompute quantities with scalar loops over the CPTs and
with pandas group-bys over samples, deliberately avoiding the vectorised
code paths in the package.
"""

import itertools

import numpy as np
import pandas as pd
import pytest

from vebelief import build_dgm2, sample_dataset


def _pu(scm, u):
    if scm.p_u is None:
        return 1.0
    return scm.p_u if u == 1 else 1.0 - scm.p_u


def _pl(scm, l):
    if scm.l_probs is None:
        return 1.0
    return float(scm.l_probs[l])


def _bern(p, v):
    return p if v == 1 else 1.0 - p


def oracle_joint(scm, a, m):
    """dict (u, l, s, b, y) -> probability, built by looping over every cell."""
    n_u = 1 if scm.p_u is None else 2
    n_l = 1 if scm.l_probs is None else len(scm.l_probs)
    out = {}
    for u, l, s, b, y in itertools.product(range(n_u), range(n_l), (0, 1), (0, 1), (0, 1)):
        p = _pu(scm, u) * _pl(scm, l)
        if scm.s_cpt is None:
            p *= 1.0 if s == 0 else 0.0
        else:
            p *= _bern(float(scm.s_cpt[a, u, l]), s)
        if m == -1:
            p *= _bern(float(scm.b_cpt[a, s, u, l]), b)
        else:
            p *= 1.0 if b == m else 0.0
        p *= _bern(float(scm.y_cpt[a, s, b, u, l]), y)
        out[u, l, s, b, y] = p
    return out


def oracle_mean(scm, a, m):
    return sum(p for (u, l, s, b, y), p in oracle_joint(scm, a, m).items() if y == 1)


def oracle_identification(scm, a, m, adjust_for_s):
    joint = oracle_joint(scm, a, -1)

    def pr(**fixed):
        names = ("u", "l", "s", "b", "y")
        return sum(p for k, p in joint.items()
                   if all(k[names.index(n)] == v for n, v in fixed.items()))

    n_l = 1 if scm.l_probs is None else len(scm.l_probs)
    total = 0.0
    for l in range(n_l):
        if adjust_for_s:
            for s in (0, 1):
                total += (pr(l=l, s=s, b=m, y=1) / pr(l=l, s=s, b=m)
                          * pr(l=l, s=s) / pr(l=l) * _pl(scm, l))
        else:
            total += pr(l=l, b=m, y=1) / pr(l=l, b=m) * _pl(scm, l)
    return total


def oracle_plugin(ds, a, m, adjust_for_s):
    """Sample g-formula through pandas group-bys."""
    df = ds.to_frame()
    if "l" not in df:
        df["l"] = 0
    if "s" not in df:
        df["s"] = 0
    p_l = df["l"].value_counts(normalize=True)
    arm = df[df.a == a]
    total = 0.0
    for l, pl in p_l.items():
        sub = arm[arm.l == l]
        if adjust_for_s:
            for s, ps in sub["s"].value_counts(normalize=True).items():
                cell = sub[(sub.s == s) & (sub.b == m)]
                total += pl * ps * cell["y"].mean()
        else:
            total += pl * sub[sub.b == m]["y"].mean()
    return total


@pytest.fixture(scope="session")
def dgm2():
    return build_dgm2()


@pytest.fixture(scope="session")
def dgm2_sample(dgm2):
    return sample_dataset(dgm2, 317, 479, master_seed=11)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.RESULTS:
        terminalreporter.write_line(line)
