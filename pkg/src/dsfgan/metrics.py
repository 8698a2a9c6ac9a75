"""Efficacy metrics and confidence intervals."""

import math

import numpy as np
from scipy import stats


def precision_recall(y_true, y_pred):
    """Precision and recall for 0/1 labels; 0/0 is taken as 0."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    tp = int(np.sum(y_true & y_pred))
    fp = int(np.sum(~y_true & y_pred))
    fn = int(np.sum(y_true & ~y_pred))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return precision, recall


def rmse_r2(y_true, y_pred):
    """RMSE and R^2 = 1 - SS_res/SS_tot. R^2 is None when y_true is constant."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size < 2:
        raise ValueError("need at least 2 values")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    rmse = math.sqrt(ss_res / y_true.size)
    return rmse, (1.0 - ss_res / ss_tot) if ss_tot > 0 else None


def confidence_interval(values, level=0.95):
    """(mean, half-width) of a two-sided Student-t interval."""
    x = np.asarray(values, dtype=np.float64)
    if x.size < 2:
        raise ValueError("confidence interval needs at least 2 values")
    k = x.size
    # identical values give exactly zero, not rounding noise in the mean
    sd = 0.0 if np.ptp(x) == 0 else float(x.std(ddof=1))
    half = float(stats.t.ppf(0.5 + level / 2, k - 1)) * sd / math.sqrt(k)
    return float(x.mean()), half
