"""Evaluation metrics for aggregated rankings against a known truth."""
from __future__ import annotations

import numpy as np


def _relevant_true(truth_ind) -> np.ndarray:
    ind = np.asarray(truth_ind)
    rel = np.flatnonzero(ind > 0)
    return rel[np.argsort(ind[rel], kind="stable")]


def _ind_of(truth):
    return truth.ind_true if hasattr(truth, "ind_true") else truth


def n_missed(hat, truth, n1: int) -> int:
    """True-relevant entities placed outside the top ``n1`` of ``hat``.

    ``hat`` gives one rank per entity; ties are allowed (a tied background
    block sits at any value above ``n1``).
    """
    hat = np.asarray(hat, dtype=float)
    rel = _relevant_true(_ind_of(truth))
    return int(np.sum(hat[rel] > n1))


def recovery_distance(hat, truth, n: int, n1: int) -> float:
    """Kendall distance over the true-relevant entities plus a miss penalty.

    Aggregated ranks beyond ``n1`` are collapsed to the tied background value
    ``(n + n1 + 1) / 2``; tied pairs are not discordant. Each missed relevant
    entity adds ``(n + n1 + 1) / 2``.
    """
    hat = np.asarray(hat, dtype=float)
    if hat.size != n:
        raise ValueError(f"aggregated ranking has {hat.size} entries, expected {n}")
    bg = (n + n1 + 1) / 2.0
    h = np.where(hat > n1, bg, hat)
    rel = _relevant_true(_ind_of(truth))
    x = h[rel]
    # pairs (a, b) with a truly ahead of b; discordant when strictly reversed
    disc = int(np.sum(np.triu(x[:, None] > x[None, :], k=1)))
    return float(disc + np.sum(x == bg) * bg)


def coverage(hat, truth, n1: int) -> float:
    rel = _relevant_true(_ind_of(truth))
    if rel.size == 0:
        raise ValueError("truth has no relevant entities")
    return (rel.size - n_missed(hat, truth, n1)) / rel.size
