"""Downstream models fitted by full-batch gradient descent from zero init.

Used both inside the training loop (feedback) and for post-training
efficacy evaluation.
"""

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .utils import check_2d


class _GradientDescentLinear(BaseEstimator):
    def __init__(self, max_iter=200, learning_rate=0.1):
        self.max_iter = max_iter
        self.learning_rate = learning_rate

    def _check_Xy(self, X, y):
        X = check_2d(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if len(y) != len(X):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
        return X, y

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        return check_2d(X, width=len(self.coef_)) @ self.coef_ + self.intercept_

    def _fit(self, X, y, residual):
        m, d = X.shape
        w = np.zeros(d)
        b = 0.0
        lr = self.learning_rate
        for _ in range(self.max_iter):
            r = residual(X @ w + b, y)
            w -= lr * (X.T @ r) / m
            b -= lr * r.sum() / m
        self.coef_ = w
        self.intercept_ = b
        self.n_features_in_ = d
        return self


class LogisticRegressionGD(ClassifierMixin, _GradientDescentLinear):
    """Binary logistic regression minimizing mean log-loss; labels are 0/1."""

    def __init__(self, max_iter=200, learning_rate=0.1):
        super().__init__(max_iter, learning_rate)

    def fit(self, X, y):
        X, y = self._check_Xy(X, y)
        self.classes_ = np.array([0.0, 1.0])
        return self._fit(X, y, lambda z, t: expit(z) - t)

    def predict_proba(self, X):
        p = expit(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X, threshold=0.5):
        return (self.predict_proba(X)[:, 1] >= threshold).astype(np.float64)


class LinearRegressionGD(RegressorMixin, _GradientDescentLinear):
    """Least-squares linear regression (mean squared error objective)."""

    def __init__(self, max_iter=200, learning_rate=0.05):
        super().__init__(max_iter, learning_rate)

    def fit(self, X, y):
        X, y = self._check_Xy(X, y)
        return self._fit(X, y, lambda z, t: 2.0 * (z - t))

    def predict(self, X):
        return self.decision_function(X)
