import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import oracle_identification, oracle_mean
from vebelief import (
    DiscreteScm,
    NotAssessableError,
    ParameterDomainError,
    PositivityError,
    UndefinedEstimandError,
    build_dgm1,
    build_dgm2,
    conditional_ve,
    decompose_total,
    estimand_report,
    identification_formula,
    potential_outcome_mean,
    ve,
    ve_behavioral,
    ve_curve,
    ve_minus1_closed_form,
    ve_total,
)
from vebelief.scm import random_confounded_belief_scm, random_scm, random_side_effect_scm

seeds = st.integers(0, 2**32 - 1)


# hand calculation for the influenza-trial mechanism:
# Pr(B=1 | A=0) = 0.21*0.7 + 0.79*0.18, Pr(B=1 | A=1) = 0.5*0.7 + 0.5*0.18
_PB0 = 0.21 * 0.7 + 0.79 * 0.18
_PB1 = 0.5 * 0.7 + 0.5 * 0.18
_E00, _E10, _E11, _E01 = 0.1395, 0.6 * 0.1395, 0.7 * 0.1395, 0.7 * 0.1395 / 0.4
_E0B = (1 - _PB0) * _E00 + _PB0 * _E01
_E1B = (1 - _PB1) * _E10 + _PB1 * _E11


def test_dgm2_ve_values(dgm2):
    assert ve(dgm2, -1) == pytest.approx(1 - _E1B / _E0B, abs=1e-12)
    assert ve(dgm2, 0) == pytest.approx(0.4, abs=1e-12)
    assert ve(dgm2, 1) == pytest.approx(0.6, abs=1e-12)
    assert ve_total(dgm2) == pytest.approx(0.3, abs=1e-12)
    assert ve_behavioral(dgm2, 0) == pytest.approx(1 - _E01 / _E00, abs=1e-12)
    assert ve_behavioral(dgm2, 1) == pytest.approx(1 - _E11 / _E10, abs=1e-12)


def test_dgm2_conditional_ve(dgm2):
    # within S=s the arm rates are mixtures over B with Pr(B=1|S=s)
    for s, pb in ((0, 0.18), (1, 0.7)):
        r1 = (1 - pb) * _E10 + pb * _E11
        r0 = (1 - pb) * _E00 + pb * _E01
        assert conditional_ve(dgm2, s) == pytest.approx(1 - r1 / r0, abs=1e-12)


def test_dgm1_no_broken_blinding():
    scm = build_dgm1(1.0, 0.3)
    for m in (-1, 0, 1):
        assert ve(scm, m) == pytest.approx(0.5 * (1 + 0.3), abs=1e-15)


def test_null_model_all_ve_zero():
    scm = DiscreteScm(s_cpt=None, b_cpt=np.full((2, 2, 1, 1), 0.3), y_cpt=np.full((2, 2, 1, 1), 0.2))
    report = estimand_report(scm)
    for m in (-1, 0, 1):
        assert report.ve_by_message[m] == 0.0
    assert report.ve_total == 0.0
    assert report.ve_behavioral == {0: 0.0, 1: 0.0}


def test_zero_denominator_raises():
    scm = DiscreteScm(s_cpt=None, b_cpt=np.full((2, 2, 1, 1), 0.3), y_cpt=np.zeros((2, 2, 1, 1)))
    with pytest.raises(UndefinedEstimandError):
        ve(scm, 1)


def test_closed_form_endpoints():
    assert ve_minus1_closed_form(0.5, 2.0) == pytest.approx(2 / 3, abs=1e-12)
    for ve_t in (0.3, 0.5, 0.7, 0.9):
        assert ve_minus1_closed_form(ve_t, 1.0) == pytest.approx(0.5 * (1 + ve_t), abs=1e-15)
    assert ve_minus1_closed_form(1.0, 1.7) == 1.0
    with pytest.raises(ParameterDomainError):
        ve_minus1_closed_form(0.5, 2.5)


def test_curve_matches_enumeration():
    rows = ve_curve((0.3, 0.9), np.linspace(1, 2, 11))
    assert len(rows) == 22
    assert max(r["abs_diff"] for r in rows) < 1e-12
    for r in rows:
        assert r["ve_0"] == pytest.approx(0.5 * (1 + r["ve_t"]), abs=1e-12)
        assert r["ve_1"] == pytest.approx(0.5 * (1 + r["ve_t"]), abs=1e-12)
        assert r["ve_total"] == pytest.approx(r["ve_t"], abs=1e-12)


def test_curve_decreasing_in_rr_b():
    rows = ve_curve((0.5,), np.linspace(1, 2, 21))
    values = [r["ve_minus1"] for r in rows]
    assert all(b < a for a, b in zip(values, values[1:]))


def test_decomposition_components(dgm2):
    add1 = decompose_total(dgm2, "additive", pivot=1)
    assert [v for _, v in add1.components] == pytest.approx([_E11 - _E10, _E10 - _E00], abs=1e-15)
    add0 = decompose_total(dgm2, "additive", pivot=0)
    assert [v for _, v in add0.components] == pytest.approx([_E11 - _E01, _E01 - _E00], abs=1e-15)
    v0 = decompose_total(dgm2, "ve", pivot=0)
    assert [v for _, v in v0.components] == pytest.approx([1 - _E01 / _E00, 0.6], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(seeds, st.sampled_from(["ve", "additive"]), st.sampled_from([0, 1]))
def test_decomposition_residual_vanishes(seed, scale, pivot):
    scm = random_scm(np.random.default_rng(seed))
    dec = decompose_total(scm, scale, pivot)
    assert abs(dec.residual) < 1e-12
    if scale == "ve":
        x, y = dec.values()
        assert x + y - x * y == pytest.approx(ve_total(scm), abs=1e-12)


def test_decompose_rejects_bad_arguments(dgm2):
    with pytest.raises(ValueError):
        decompose_total(dgm2, "log", 0)
    with pytest.raises(ValueError):
        decompose_total(dgm2, "ve", 2)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0, 1]), st.sampled_from([0, 1]))
def test_s_adjusted_formula_identifies(seed, a, m):
    scm = random_side_effect_scm(np.random.default_rng(seed))
    value = identification_formula(scm, a, m, adjust_for_s=True)
    assert value == pytest.approx(potential_outcome_mean(scm, a, m), abs=1e-12)
    assert value == pytest.approx(oracle_identification(scm, a, m, True), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.sampled_from([0, 1]), st.sampled_from([0, 1]))
def test_unadjusted_formula_matches_oracle(seed, a, m):
    scm = random_scm(np.random.default_rng(seed))
    assert identification_formula(scm, a, m) == pytest.approx(
        oracle_identification(scm, a, m, False), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_unadjusted_formula_biased_under_confounding(seed):
    scm = random_confounded_belief_scm(np.random.default_rng(seed))
    gaps = [abs(identification_formula(scm, a, m) - oracle_mean(scm, a, m))
            for a in (0, 1) for m in (0, 1)]
    assert max(gaps) > 1e-6


def test_identification_errors():
    scm = DiscreteScm(s_cpt=None, b_cpt=np.ones((2, 2, 1, 1)), y_cpt=np.full((2, 2, 1, 1), 0.2))
    with pytest.raises(PositivityError) as info:
        identification_formula(scm, 1, 0)
    assert info.value.cell == {"l": 0, "a": 1, "b": 0}
    with pytest.raises(NotAssessableError):
        identification_formula(build_dgm1(1.2, 0.3), 1, 1, adjust_for_s=True)
    with pytest.raises(NotAssessableError):
        conditional_ve(build_dgm1(1.2, 0.3), 0)


def test_report_rows_cover_all_quantities(dgm2):
    names = [name for name, _ in estimand_report(dgm2).rows()]
    for needed in ("VE(-1)", "VE(0)", "VE(1)", "VE_t", "VE_m(0)", "VE_m(1)", "VE(-1,S=0)"):
        assert needed in names
    assert sum(n.startswith("E(Y^") for n in names) == 6
