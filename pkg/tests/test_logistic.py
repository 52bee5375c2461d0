import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from vebelief import DesignError, IRLSLogisticRegression
from vebelief.logistic import fit_logistic


def _data(seed, n=2000):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=n), rng.integers(0, 2, n)])
    beta = np.array([-0.5, 0.8, -1.2])
    y = (rng.random(n) < 1 / (1 + np.exp(-X @ beta))).astype(int)
    return X, y


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_sklearn_unpenalised(seed):
    X, y = _data(seed)
    ours = IRLSLogisticRegression().fit(X, y)
    ref = LogisticRegression(penalty=None, fit_intercept=False, tol=1e-12, max_iter=10_000).fit(X, y)
    assert ours.converged_
    np.testing.assert_allclose(ours.coef_, ref.coef_.ravel(), atol=1e-6)
    assert ours.max_abs_score_ < 1e-8


def test_saturated_model_reproduces_cell_means():
    rng = np.random.default_rng(4)
    g = rng.integers(0, 2, 500)
    y = (rng.random(500) < np.where(g == 1, 0.3, 0.1)).astype(int)
    X = np.column_stack([np.ones(500), g])
    p = IRLSLogisticRegression().fit(X, y).predict_proba(np.array([[1, 0], [1, 1]]))[:, 1]
    np.testing.assert_allclose(p, [y[g == 0].mean(), y[g == 1].mean()], atol=1e-12)


def test_separation_reports_non_convergence():
    x = np.arange(20, dtype=float)
    X = np.column_stack([np.ones(20), x])
    y = (x >= 10).astype(int)
    fit = IRLSLogisticRegression(max_iter=50).fit(X, y)
    assert not fit.converged_


def test_rank_deficient_design():
    X = np.column_stack([np.ones(10), np.ones(10)])
    with pytest.raises(DesignError):
        IRLSLogisticRegression().fit(X, np.r_[np.zeros(5), np.ones(5)])


def test_constant_outcome_rejected():
    with pytest.raises(ValueError, match="all equal"):
        IRLSLogisticRegression().fit(np.ones((4, 1)), np.zeros(4))


def test_functional_wrapper_and_standard_errors():
    X, y = _data(7)
    fit = fit_logistic(X, y)
    model = IRLSLogisticRegression().fit(X, y)
    np.testing.assert_array_equal(fit.coefficients, model.coef_)
    se = model.standard_errors(X)
    assert se.shape == (3,) and np.all(se > 0)
    assert model.get_params() == {"tol": 1e-8, "max_iter": 100, "step_tol": 1e-6}
