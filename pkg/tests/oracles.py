"""Independent reference computations used by the tests.

Nothing here calls ``Tensor.backward``; gradients come from central finite
differences over plain forward evaluations.
"""

import math

import numpy as np


def numeric_grad(f, arrays, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. each array (mutated in place, restored)."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        it = np.nditer(a, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = a[i]
            a[i] = old + h
            fp = f()
            a[i] = old - h
            fm = f()
            a[i] = old
            g[i] = (fp - fm) / (2 * h)
        grads.append(g)
    return grads


def rel_err(analytic, numeric, floor=1e-8):
    """Worst per-tensor max |a - n| / scale.

    ``scale`` is the tensor's own largest magnitude, but never below 1e-3 of
    the largest gradient in the whole graph (so an exactly-zero tensor is
    compared against finite-difference noise at the graph's scale).
    """
    overall = max(max(np.abs(a).max(), np.abs(n).max()) for a, n in zip(analytic, numeric))
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.abs(n).max(), np.abs(a).max(), 1e-3 * overall, floor)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


def adam_scalar(p, grads, lr, b1, b2, eps):
    """Textbook scalar Adam, written without numpy."""
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        p = p - lr * mhat / (math.sqrt(vhat) + eps)
        out.append(p)
    return out


def normal_equations(X, y):
    """Least-squares (w, b) via the normal equations on [X, 1]."""
    A = np.column_stack([X, np.ones(len(X))])
    coef = np.linalg.solve(A.T @ A, A.T @ y)
    return coef[:-1], coef[-1]


def t_interval(values, t_crit):
    """Mean and half-width from a tabulated t critical value."""
    n = len(values)
    mu = sum(values) / n
    sd = math.sqrt(sum((v - mu) ** 2 for v in values) / (n - 1))
    return mu, t_crit * sd / math.sqrt(n)
