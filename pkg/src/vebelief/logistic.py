"""Maximum-likelihood logistic regression by iteratively reweighted least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DesignError


@dataclass(frozen=True)
class RegressionFit:
    coefficients: np.ndarray
    converged: bool
    iterations: int
    log_likelihood: float
    max_abs_score: float


def _log_likelihood(y, eta):
    # log(1 + exp(eta)) computed stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


class IRLSLogisticRegression(ClassifierMixin, BaseEstimator):
    """Unpenalised logistic regression fitted by Newton-Raphson (IRLS).

    The design matrix is used as given; include a column of ones for an
    intercept.  The fit is declared converged once the largest absolute
    score component falls below ``tol`` and the Newton step has stopped
    moving the coefficients.  Under complete or quasi-complete separation
    the coefficients drift without bound, the step never shrinks, and the
    fit ends with ``converged_ = False`` rather than raising.

    Parameters
    ----------
    tol : float
        Threshold on ``max |X^T (y - p)|``.
    max_iter : int
        Iteration cap.
    step_tol : float
        Threshold on the largest coefficient update.
    """

    def __init__(self, tol=1e-8, max_iter=100, step_tol=1e-6):
        self.tol = tol
        self.max_iter = max_iter
        self.step_tol = step_tol

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError(f"incompatible shapes X{X.shape} and y{y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("outcomes must be binary 0/1")
        if y.min() == y.max():
            raise ValueError("outcomes are all equal; the MLE does not exist")
        rank = np.linalg.matrix_rank(X)
        if rank < X.shape[1]:
            raise DesignError(f"design matrix has rank {rank} < {X.shape[1]} columns")

        beta = np.zeros(X.shape[1])
        converged = False
        score_max = np.inf
        it = 0
        for it in range(1, self.max_iter + 1):
            eta = X @ beta
            p = expit(eta)
            score = X.T @ (y - p)
            score_max = float(np.max(np.abs(score)))
            w = p * (1.0 - p)
            info = X.T @ (X * w[:, None])
            try:
                step = np.linalg.solve(info, score)
            except np.linalg.LinAlgError:
                break
            if not np.all(np.isfinite(step)):
                break
            if score_max < self.tol and np.max(np.abs(step)) < self.step_tol:
                converged = True
                break
            beta = beta + step

        eta = X @ beta
        self.coef_ = beta
        self.converged_ = converged
        self.n_iter_ = it
        self.log_likelihood_ = _log_likelihood(y, eta)
        self.max_abs_score_ = score_max
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return np.asarray(X, dtype=float) @ self.coef_

    def predict_proba(self, X):
        p1 = expit(self.decision_function(X))
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(int)

    def standard_errors(self, X):
        """Model-based standard errors from the observed information at the fit."""
        X = np.asarray(X, dtype=float)
        p = expit(X @ self.coef_)
        info = X.T @ (X * (p * (1.0 - p))[:, None])
        return np.sqrt(np.diag(np.linalg.inv(info)))


def fit_logistic(design, outcomes, tol=1e-8, max_iter=100):
    """Functional wrapper returning a :class:`RegressionFit`."""
    model = IRLSLogisticRegression(tol=tol, max_iter=max_iter).fit(design, outcomes)
    return RegressionFit(
        coefficients=model.coef_,
        converged=model.converged_,
        iterations=model.n_iter_,
        log_likelihood=model.log_likelihood_,
        max_abs_score=model.max_abs_score_,
    )
