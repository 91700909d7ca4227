"""Mean-rank moment estimator of the enhanced indicator."""
from __future__ import annotations

from itertools import combinations

import numpy as np

from .rankings import indicator_from_order


def mean_ranks(taus) -> np.ndarray:
    return np.atleast_2d(np.asarray(taus, dtype=float)).mean(axis=0)


def min_variance_window(values, size: int) -> np.ndarray:
    """Indices of the ``size`` values with the smallest within-set variance.

    For scalars an optimal subset is always contiguous in sorted order, so a
    sliding window over the sorted values finds it in O(n log n).
    """
    values = np.asarray(values, dtype=float)
    n = values.size
    if size <= 0:
        return np.array([], dtype=np.int64)
    order = np.argsort(values, kind="stable")
    v = values[order]
    c1 = np.concatenate(([0.0], np.cumsum(v)))
    c2 = np.concatenate(([0.0], np.cumsum(v * v)))
    starts = np.arange(n - size + 1)
    s1 = c1[starts + size] - c1[starts]
    s2 = c2[starts + size] - c2[starts]
    sse = s2 - s1 * s1 / size
    # ties go to the latest window: background entities trail the relevant ones
    best = int(np.flatnonzero(sse <= sse.min() + 1e-12 * max(1.0, abs(sse.min())))[-1])
    return np.sort(order[best:best + size])


def min_variance_subset_bruteforce(values, size: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    best, best_sse = None, np.inf
    for sub in combinations(range(values.size), size):
        v = values[list(sub)]
        sse = float(((v - v.mean()) ** 2).sum())
        if sse < best_sse - 1e-12:
            best, best_sse = sub, sse
    return np.array(best, dtype=np.int64)


def partial_mean_ranks(partials) -> np.ndarray:
    """Mean rank of each entity over the lists that rank it.

    A rank ``r`` in a list of ``s`` ranked entities is rescaled to
    ``r (n + 1) / (s + 1)`` so lists of different lengths are comparable;
    entities ranked nowhere get the midpoint ``(n + 1) / 2``.
    """
    n = partials[0].n
    tot = np.zeros(n)
    cnt = np.zeros(n)
    for p in partials:
        s = len(p.positions)
        for i, r in p.positions.items():
            tot[i] += r * (n + 1) / (s + 1)
            cnt[i] += 1
    return np.where(cnt > 0, tot / np.maximum(cnt, 1), (n + 1) / 2.0)


def indicator_from_means(tbar, n1: int) -> np.ndarray:
    """Minimum-variance background window, remaining entities ranked by mean."""
    tbar = np.asarray(tbar, dtype=float)
    n = tbar.size
    if not 1 <= n1 <= n:
        raise ValueError(f"n1 must lie in 1..{n}")
    background = min_variance_window(tbar, n - n1)
    relevant = np.setdiff1d(np.arange(n), background)
    relevant = relevant[np.lexsort((relevant, tbar[relevant]))]
    return indicator_from_order(relevant, n)


def moment_estimator(taus, n1: int) -> np.ndarray:
    """Estimate the indicator from mean ranks.

    The background set is the size ``n - n1`` window of sorted mean ranks with
    the smallest variance; the remaining entities are ranked by mean rank, ties
    broken by entity index.
    """
    return indicator_from_means(mean_ranks(taus), n1)
