"""Compiled inner loops shared by the samplers and the optimizer.

Layout conventions: ``P[l, i]`` is the 1-based position of entity ``i`` in
list ``l``; ``O[l, p]`` is the entity at 0-based position ``p``. ``rel`` holds
relevant entities ordered by label and ``bg`` the background entities in
arbitrary order. All arrays are int64/float64 and are mutated in place.
"""
import numpy as np
from numba import njit


def log_tables(n: int):
    logt = np.log(np.arange(1, n + 3, dtype=np.float64))
    logt = np.concatenate(([0.0], logt))  # logt[t] = log t, t >= 1
    from scipy.special import gammaln

    lfact = gammaln(np.arange(0, n + 2, dtype=np.float64) + 1.0)
    return logt, lfact


@njit(cache=True)
def list_stats(Pl, Ol, labels, rel, logt, lfact, cnt):
    """Kendall distance of the relevant order, log B* and log A* for one list."""
    n1 = rel.shape[0]
    n = Pl.shape[0]
    d = 0
    for a in range(n1):
        pa = Pl[rel[a]]
        for b in range(a + 1, n1):
            if pa > Pl[rel[b]]:
                d += 1
    for t in range(n1 + 2):
        cnt[t] = 0
    below = 0
    logB = 0.0
    for p in range(n - 1, -1, -1):
        e = Ol[p]
        if labels[e] > 0:
            below += 1
        else:
            slot = below + 1
            logB += logt[slot]
            cnt[slot] += 1
    logA = 0.0
    for t in range(1, n1 + 2):
        logA += lfact[cnt[t]]
    return d, logB, logA


@njit(cache=True)
def all_stats(P, O, labels, rel, logt, lfact, d, logB, logA):
    cnt = np.zeros(rel.shape[0] + 2, dtype=np.int64)
    for l in range(P.shape[0]):
        dd, bb, aa = list_stats(P[l], O[l], labels, rel, logt, lfact, cnt)
        d[l] = dd
        logB[l] = bb
        logA[l] = aa


@njit(cache=True)
def _move_delta(move, P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                logt, lfact, nd, nB, nA, cnt):
    """Change in the indicator objective for ``move``; fills proposed stats."""
    n1 = rel.shape[0]
    L = P.shape[0]
    delta = 0.0
    if move < n1 - 1:
        e1 = rel[move]
        e2 = rel[move + 1]
        for l in range(L):
            if P[l, e1] < P[l, e2]:
                nd[l] = d[l] + 1
            else:
                nd[l] = d[l] - 1
            nB[l] = logB[l]
            nA[l] = logA[l]
            delta -= w[l] * phi * gl[l] * (nd[l] - d[l])
        return delta
    j_idx = move - (n1 - 1)
    r = rel[n1 - 1]
    j = bg[j_idx]
    labels[j] = n1
    labels[r] = 0
    rel[n1 - 1] = j
    for l in range(L):
        dd, bb, aa = list_stats(P[l], O[l], labels, rel, logt, lfact, cnt)
        nd[l] = dd
        nB[l] = bb
        nA[l] = aa
        delta += w[l] * (-(aa - logA[l]) - gl[l] * (bb - logB[l]) - phi * gl[l] * (dd - d[l]))
    labels[r] = n1
    labels[j] = 0
    rel[n1 - 1] = r
    delta += xpsi[j] - xpsi[r]
    return delta


@njit(cache=True)
def _apply_move(move, labels, rel, bg, d, logB, logA, nd, nB, nA):
    n1 = rel.shape[0]
    if move < n1 - 1:
        e1 = rel[move]
        e2 = rel[move + 1]
        rel[move] = e2
        rel[move + 1] = e1
        labels[e2] = move + 1
        labels[e1] = move + 2
    else:
        j_idx = move - (n1 - 1)
        r = rel[n1 - 1]
        j = bg[j_idx]
        labels[j] = n1
        labels[r] = 0
        rel[n1 - 1] = j
        bg[j_idx] = r
    for l in range(d.shape[0]):
        d[l] = nd[l]
        logB[l] = nB[l]
        logA[l] = nA[l]


@njit(cache=True)
def indicator_mh(P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                 moves, log_u, logt, lfact):
    """Metropolis updates of the indicator; returns the number of acceptances."""
    L = P.shape[0]
    nd = np.empty(L, dtype=np.int64)
    nB = np.empty(L)
    nA = np.empty(L)
    cnt = np.zeros(rel.shape[0] + 2, dtype=np.int64)
    acc = 0
    for s in range(moves.shape[0]):
        mv = moves[s]
        delta = _move_delta(mv, P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                            logt, lfact, nd, nB, nA, cnt)
        if log_u[s] < delta:
            _apply_move(mv, labels, rel, bg, d, logB, logA, nd, nB, nA)
            acc += 1
    return acc


@njit(cache=True)
def move_delta(move, P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi, logt, lfact):
    L = P.shape[0]
    nd = np.empty(L, dtype=np.int64)
    nB = np.empty(L)
    nA = np.empty(L)
    cnt = np.zeros(rel.shape[0] + 2, dtype=np.int64)
    return _move_delta(move, P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                       logt, lfact, nd, nB, nA, cnt)


@njit(cache=True)
def indicator_ascent(P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                     logt, lfact, max_passes):
    """First-improvement hill climbing over adjacent and boundary swaps.

    Returns the number of applied moves.
    """
    L = P.shape[0]
    nd = np.empty(L, dtype=np.int64)
    nB = np.empty(L)
    nA = np.empty(L)
    cnt = np.zeros(rel.shape[0] + 2, dtype=np.int64)
    n_moves = rel.shape[0] - 1 + bg.shape[0]
    applied = 0
    for _ in range(max_passes):
        improved = False
        for mv in range(n_moves):
            delta = _move_delta(mv, P, O, labels, rel, bg, d, logB, logA, gl, phi, w, xpsi,
                                logt, lfact, nd, nB, nA, cnt)
            if delta > 1e-12:
                _apply_move(mv, labels, rel, bg, d, logB, logA, nd, nB, nA)
                applied += 1
                improved = True
        if not improved:
            break
    return applied


@njit(cache=True)
def _swap_entities(Pl, Ol, i, j):
    pi = Pl[i]
    pj = Pl[j]
    Pl[i] = pj
    Pl[j] = pi
    Ol[pj - 1] = i
    Ol[pi - 1] = j


@njit(cache=True)
def swap_is_compatible(Pl, Ol, ranked, i, j):
    """Whether swapping entities ``i`` and ``j`` keeps the ranked subset's order."""
    if i == j:
        return False
    if ranked[i] and ranked[j]:
        return False
    if not ranked[i] and not ranked[j]:
        return True
    lo = min(Pl[i], Pl[j])
    hi = max(Pl[i], Pl[j])
    for p in range(lo, hi - 1):
        # positions lo+1 .. hi-1 (1-based) are indices lo .. hi-2
        if ranked[Ol[p]]:
            return False
    return True


@njit(cache=True)
def impute_mh(Pl, Ol, ranked, labels, rel, gamma_k, phi, pairs_i, pairs_j, log_u,
              logt, lfact):
    """Metropolis refresh of one completed list restricted to its compatible set.

    Returns ``(accepted, d, logB, logA)`` for the final state.
    """
    cnt = np.zeros(rel.shape[0] + 2, dtype=np.int64)
    d, logB, logA = list_stats(Pl, Ol, labels, rel, logt, lfact, cnt)
    acc = 0
    for s in range(pairs_i.shape[0]):
        i = pairs_i[s]
        j = pairs_j[s]
        if not swap_is_compatible(Pl, Ol, ranked, i, j):
            continue
        _swap_entities(Pl, Ol, i, j)
        dd, bb, aa = list_stats(Pl, Ol, labels, rel, logt, lfact, cnt)
        delta = -(aa - logA) - gamma_k * (bb - logB) - phi * gamma_k * (dd - d)
        if log_u[s] < delta:
            d, logB, logA = dd, bb, aa
            acc += 1
        else:
            _swap_entities(Pl, Ol, i, j)
    return acc, d, logB, logA
