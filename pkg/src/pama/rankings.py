"""Permutation primitives for rank aggregation.

A full ranking over ``n`` entities is stored as an integer array of
positions: ``tau[i]`` is the 1-based position of entity ``i`` (lower is more
preferred). An enhanced indicator stores ``0`` for background entities and
the 1-based rank among relevant entities otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Mapping

import numpy as np


class RankingError(ValueError):
    """Raised when a ranking, partial ranking or indicator is malformed."""


def as_ranking(tau) -> np.ndarray:
    """Validate ``tau`` as a permutation of ``1..n`` and return an int array."""
    arr = np.asarray(tau)
    if arr.ndim != 1:
        raise RankingError("a ranking must be one-dimensional")
    if arr.size and not np.all(np.equal(np.mod(arr, 1), 0)):
        raise RankingError("ranks must be integers")
    arr = arr.astype(np.int64)
    if not np.array_equal(np.sort(arr), np.arange(1, arr.size + 1)):
        raise RankingError(f"not a permutation of 1..{arr.size}: {arr.tolist()}")
    return arr


def as_indicator(labels, n1: int | None = None) -> np.ndarray:
    """Validate an enhanced indicator and return it as an int array."""
    arr = np.asarray(labels).astype(np.int64)
    if arr.ndim != 1:
        raise RankingError("an indicator must be one-dimensional")
    pos = np.sort(arr[arr > 0])
    if np.any(arr < 0) or not np.array_equal(pos, np.arange(1, pos.size + 1)):
        raise RankingError(f"nonzero labels must form a permutation of 1..n1: {arr.tolist()}")
    if n1 is not None and pos.size != n1:
        raise RankingError(f"indicator has {pos.size} relevant entities, expected {n1}")
    return arr


def indicator_from_order(relevant_order, n: int) -> np.ndarray:
    """Build an indicator from the relevant entities listed best first."""
    labels = np.zeros(n, dtype=np.int64)
    labels[np.asarray(relevant_order, dtype=np.int64)] = np.arange(1, len(relevant_order) + 1)
    return labels


def relevant_order(labels) -> np.ndarray:
    """Entity indices of the relevant set sorted by label (best first)."""
    labels = np.asarray(labels)
    rel = np.flatnonzero(labels > 0)
    return rel[np.argsort(labels[rel], kind="stable")]


def _count_inversions(seq: list) -> int:
    # merge sort inversion count
    if len(seq) <= 1:
        return 0
    buf = list(seq)
    width = 1
    inv = 0
    n = len(buf)
    while width < n:
        out = []
        for lo in range(0, n, 2 * width):
            left = buf[lo:lo + width]
            right = buf[lo + width:lo + 2 * width]
            i = j = 0
            while i < len(left) and j < len(right):
                if left[i] <= right[j]:
                    out.append(left[i])
                    i += 1
                else:
                    out.append(right[j])
                    inv += len(left) - i
                    j += 1
            out.extend(left[i:])
            out.extend(right[j:])
        buf = out
        width *= 2
    return inv


def kendall_tau(a, b) -> int:
    """Number of discordant pairs between two rankings of the same entities.

    Parameters
    ----------
    a, b : array-like of int
        Position vectors over the same entity set. Values need not be
        ``1..n``; only their relative order matters, so relative ranks of a
        subset may be passed directly.

    Returns
    -------
    int
        Kendall tau distance, between 0 and ``n(n-1)/2``.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise RankingError("rankings must cover the same entity set")
    if np.unique(a).size != a.size or np.unique(b).size != b.size:
        raise RankingError("rankings must not contain ties")
    # order entities by a, count inversions of b in that order
    seq = b[np.argsort(a, kind="stable")].tolist()
    return _count_inversions(seq)


def kendall_tau_bruteforce(a, b) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    n = a.size
    return sum(
        1
        for i in range(n)
        for j in range(i + 1, n)
        if (a[i] - a[j]) * (b[i] - b[j]) < 0
    )


def relative_ranks(values) -> np.ndarray:
    """1-based ranks of ``values`` among themselves (ascending)."""
    values = np.asarray(values)
    out = np.empty(values.size, dtype=np.int64)
    out[np.argsort(values, kind="stable")] = np.arange(1, values.size + 1)
    return out


@dataclass(frozen=True)
class Decomposition:
    """Triplet equivalent to a full ranking given an enhanced indicator.

    ``relevant`` and ``background`` hold entity indices in increasing index
    order; ``tau1``, ``tau01`` and ``tau0`` are aligned with them.
    """

    relevant: np.ndarray
    background: np.ndarray
    tau1: np.ndarray
    tau01: np.ndarray
    tau0: np.ndarray

    @property
    def n1(self) -> int:
        return int(self.relevant.size)


def decompose(tau, ind) -> Decomposition:
    """Split ``tau`` into relevant order, background slots and background order."""
    tau = as_ranking(tau)
    ind = as_indicator(ind)
    if ind.size != tau.size:
        raise RankingError("indicator and ranking sizes differ")
    relevant = np.flatnonzero(ind > 0)
    background = np.flatnonzero(ind == 0)
    n1 = relevant.size
    tau1 = relative_ranks(tau[relevant])
    rel_pos = np.sort(tau[relevant])
    # number of relevant entities ranked ahead of each background entity
    ahead = np.searchsorted(rel_pos, tau[background])
    tau01 = (n1 + 1 - ahead).astype(np.int64)
    tau0 = relative_ranks(tau[background])
    return Decomposition(relevant, background, tau1, tau01, tau0)


def compose(d: Decomposition, ind) -> np.ndarray:
    """Inverse of :func:`decompose`."""
    ind = as_indicator(ind)
    n = ind.size
    relevant = np.flatnonzero(ind > 0)
    background = np.flatnonzero(ind == 0)
    if not (np.array_equal(relevant, d.relevant) and np.array_equal(background, d.background)):
        raise RankingError("decomposition does not match the indicator's partition")
    n1 = relevant.size
    tau01 = np.asarray(d.tau01, dtype=np.int64)
    tau0 = np.asarray(d.tau0, dtype=np.int64)
    if tau01.size and (tau01.min() < 1 or tau01.max() > n1 + 1):
        raise RankingError(f"slot values must lie in 1..{n1 + 1}")
    bg_sorted = background[np.argsort(tau0, kind="stable")]
    slots_sorted = tau01[np.argsort(tau0, kind="stable")]
    if np.any(np.diff(slots_sorted) > 0):
        raise RankingError("background order is incompatible with the slot assignment")
    rel_sorted = relevant[np.argsort(d.tau1, kind="stable")]
    sequence: list[int] = []
    b = 0
    for j in range(n1 + 1):
        slot = n1 + 1 - j
        while b < bg_sorted.size and slots_sorted[b] == slot:
            sequence.append(int(bg_sorted[b]))
            b += 1
        if j < n1:
            sequence.append(int(rel_sorted[j]))
    tau = np.empty(n, dtype=np.int64)
    tau[np.asarray(sequence, dtype=np.int64)] = np.arange(1, n + 1)
    return tau


def compatible_count(tau01) -> int:
    """Number of background orderings compatible with a slot assignment."""
    _, counts = np.unique(np.asarray(tau01, dtype=np.int64), return_counts=True)
    out = 1
    for c in counts:
        out *= factorial(int(c))
    return out


@dataclass(frozen=True)
class PartialRanking:
    """A ranking of a subset of a universe of ``n`` entities.

    Unranked entities are simply absent from ``positions``.
    """

    n: int
    positions: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        pos = dict(self.positions)
        if any(not 0 <= i < self.n for i in pos):
            raise RankingError("partial ranking refers to entities outside the universe")
        if sorted(pos.values()) != list(range(1, len(pos) + 1)):
            raise RankingError("ranks in a partial list must be a permutation of 1..|subset|")
        object.__setattr__(self, "positions", pos)

    @property
    def subset(self) -> frozenset:
        return frozenset(self.positions)

    @property
    def is_full(self) -> bool:
        return len(self.positions) == self.n

    def ranked_order(self) -> list[int]:
        """Ranked entities, best first."""
        return sorted(self.positions, key=self.positions.__getitem__)

    @classmethod
    def from_full(cls, tau) -> "PartialRanking":
        tau = as_ranking(tau)
        return cls(tau.size, {i: int(r) for i, r in enumerate(tau)})

    def to_ranking(self) -> np.ndarray:
        if not self.is_full:
            raise RankingError("partial ranking does not cover the universe")
        return np.array([self.positions[i] for i in range(self.n)], dtype=np.int64)


def project(tau, subset) -> dict[int, int]:
    """Relative ranks of ``subset`` entities under the full ranking ``tau``."""
    tau = np.asarray(tau)
    members = sorted(subset, key=lambda i: tau[i])
    return {i: r for r, i in enumerate(members, start=1)}


def is_compatible(full, partial: PartialRanking) -> bool:
    """True iff the projection of ``full`` onto the partial's subset equals it."""
    full = np.asarray(full)
    if full.size != partial.n:
        return False
    return project(full, partial.positions) == dict(partial.positions)
