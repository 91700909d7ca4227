"""Convergence diagnostics for MCMC traces."""
from __future__ import annotations

import numpy as np


def _batch_var_of_mean(x: np.ndarray) -> float:
    # batch-means estimate of Var(mean) that accounts for autocorrelation
    n = x.size
    b = max(int(np.sqrt(n)), 1)
    k = n // b
    if k < 2:
        return float(np.var(x, ddof=1) / n) if n > 1 else 0.0
    means = x[: k * b].reshape(k, b).mean(axis=1)
    return float(np.var(means, ddof=1) / k)


def geweke_z(trace, first: float = 0.1, last: float = 0.5) -> float:
    """Geweke statistic comparing the early and late parts of a trace."""
    x = np.asarray(trace, dtype=float)
    if not (0 < first < 1 and 0 < last < 1 and first + last <= 1):
        raise ValueError("first and last must be fractions summing to at most 1")
    n = x.size
    a = x[: max(int(first * n), 2)]
    b = x[n - max(int(last * n), 2):]
    se2 = _batch_var_of_mean(a) + _batch_var_of_mean(b)
    if se2 == 0:
        return 0.0 if a.mean() == b.mean() else float("inf")
    return float((a.mean() - b.mean()) / np.sqrt(se2))
