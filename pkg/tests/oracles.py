"""Independent reference computations used by several test modules."""

from itertools import combinations

import numpy as np


def exact_lts_objective(X, y, h):
    """Minimum over all h-subsets of the OLS residual sum of squares on the subset.

    The LTS optimum is attained at the OLS fit of some h-subset, so full
    enumeration gives the exact objective.
    """
    X = np.asarray(X, dtype=float).reshape(len(y), -1)
    Z = np.column_stack([np.ones(len(y)), X])
    best = np.inf
    for H in combinations(range(len(y)), h):
        H = list(H)
        coef, *_ = np.linalg.lstsq(Z[H], y[H], rcond=None)
        rss = float(np.sum((y[H] - Z[H] @ coef) ** 2))
        best = min(best, rss)
    return best


def regression_instance(seed, n=40, k=2, outliers=4):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, k))
    y = 2.0 + X @ np.arange(1.0, k + 1) + g.standard_normal(n)
    y[:outliers] += 25.0 * g.choice([-1.0, 1.0], outliers)
    return X, y
