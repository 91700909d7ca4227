"""Array layout of observed full lists used by the compiled kernels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import all_stats, log_tables
from .rankings import as_ranking, relevant_order


def order_from_positions(P: np.ndarray) -> np.ndarray:
    """``O[l, p]`` = entity at 0-based position ``p`` of list ``l``."""
    P = np.atleast_2d(P)
    O = np.empty_like(P)
    rows = np.arange(P.shape[0])[:, None]
    O[rows, P - 1] = np.arange(P.shape[1])[None, :]
    return O


@dataclass
class RankData:
    """``m`` full rankings over ``n`` entities as a position matrix.

    ``X`` optionally carries an ``(n, p)`` entity covariate matrix.
    """

    P: np.ndarray
    X: np.ndarray | None = None
    O: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.X is not None:
            self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        P = np.atleast_2d(np.asarray(self.P))
        self.P = np.ascontiguousarray(np.stack([as_ranking(row) for row in P]), dtype=np.int64)
        self.O = order_from_positions(self.P)
        self.logt, self.lfact = log_tables(self.n)
        if self.X is not None and self.X.shape[0] != self.n:
            raise ValueError(f"covariate matrix has {self.X.shape[0]} rows for {self.n} entities")

    @property
    def m(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.P.shape[1]

    def refresh_order(self, rows=None):
        if rows is None:
            self.O = order_from_positions(self.P)
        else:
            for l in np.atleast_1d(rows):
                self.O[l, self.P[l] - 1] = np.arange(self.n)

    def stats(self, labels):
        """Per-list ``(d, logB, logA)`` under the given indicator."""
        labels = np.ascontiguousarray(labels, dtype=np.int64)
        rel = relevant_order(labels).astype(np.int64)
        d = np.empty(self.m, dtype=np.int64)
        logB = np.empty(self.m)
        logA = np.empty(self.m)
        all_stats(self.P, self.O, labels, rel, self.logt, self.lfact, d, logB, logA)
        return d, logB, logA
