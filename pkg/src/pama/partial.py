"""Aggregation from partial lists by data augmentation and Monte Carlo EM.

Unranked entities are treated as missing at random. Each partial list is
carried as a full completion that is refreshed by a Metropolis sampler
restricted to completions whose projection on the ranked subset matches the
observed list.
"""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from . import _kernels
from .bayes import ChainConfig, ChainResult, ConfigError, initial_state, log_posterior, run_chain
from .data import RankData
from .mle import MleConfig, MleResult, _check, _initial, _Problem, _result, fit_weighted
from .model import PamaParams
from .moment import indicator_from_means, partial_mean_ranks
from .rankings import PartialRanking, relevant_order

logger = logging.getLogger(__name__)


def initial_completion(partial: PartialRanking, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random full ranking compatible with ``partial``."""
    if partial.is_full:
        return partial.to_ranking()
    n = partial.n
    tau = rng.permutation(n) + 1
    order = partial.ranked_order()
    if order:
        slots = np.sort(tau[order])
        tau[order] = slots
    return tau.astype(np.int64)


def _ranked_mask(partial: PartialRanking) -> np.ndarray:
    mask = np.zeros(partial.n, dtype=np.bool_)
    mask[list(partial.subset)] = True
    return mask


def _draw_pairs(n: int, steps: int, rng):
    i = rng.integers(0, n, size=steps)
    j = (i + rng.integers(1, n, size=steps)) % n
    return i.astype(np.int64), j.astype(np.int64)


def _default_steps(n: int) -> int:
    return 2 * n


def sample_compatible_full(current, partial: PartialRanking, params: PamaParams, k: int,
                           steps: int | None, rng: np.random.Generator) -> np.ndarray:
    """Metropolis moves over completions of ``partial`` under list ``k``'s law.

    Each proposal swaps two distinct uniformly chosen entities; proposals that
    break the observed relative order are rejected outright.
    """
    Pl = np.array(current, dtype=np.int64)
    if partial.is_full:
        return Pl
    n = Pl.size
    steps = _default_steps(n) if steps is None else int(steps)
    Ol = np.empty(n, dtype=np.int64)
    Ol[Pl - 1] = np.arange(n)
    ind = np.ascontiguousarray(params.ind, dtype=np.int64)
    rel = relevant_order(ind).astype(np.int64)
    logt, lfact = _kernels.log_tables(n)
    pi, pj = _draw_pairs(n, steps, rng)
    log_u = np.log(rng.random(steps))
    _kernels.impute_mh(Pl, Ol, _ranked_mask(partial), ind, rel, float(params.gamma[k]),
                       float(params.phi), pi, pj, log_u, logt, lfact)
    return Pl


def _validate_partials(partials: Sequence[PartialRanking]) -> int:
    if len(partials) == 0:
        raise ConfigError("no ranking lists supplied")
    ns = {p.n for p in partials}
    if len(ns) != 1:
        raise ConfigError("partial lists refer to different universes")
    return ns.pop()


class _Imputer:
    """Refreshes the incomplete rows of a :class:`RankData` in place."""

    def __init__(self, partials, data: RankData, steps: int | None):
        self.rows = [l for l, p in enumerate(partials) if not p.is_full]
        self.masks = {l: _ranked_mask(partials[l]) for l in self.rows}
        self.data = data
        self.steps = _default_steps(data.n) if steps is None else int(steps)

    def refresh(self, labels, rel, gamma, phi, rng, owner=None):
        """Run the restricted sampler on every incomplete row.

        Returns ``{row: (d, logB, logA)}`` for the refreshed rows.
        """
        out = {}
        for l in self.rows:
            k = l if owner is None else owner[l]
            pi, pj = _draw_pairs(self.data.n, self.steps, rng)
            log_u = np.log(rng.random(self.steps))
            _, d, b, a = _kernels.impute_mh(
                self.data.P[l], self.data.O[l], self.masks[l], labels, rel,
                float(gamma[k]), float(phi), pi, pj, log_u, self.data.logt, self.data.lfact,
            )
            out[l] = (d, b, a)
        return out


def _initial_indicator(partials, n1):
    # same as the moment estimator when every list is full
    return indicator_from_means(partial_mean_ranks(partials), n1)


def complete_all(partials, rng) -> np.ndarray:
    return np.stack([initial_completion(p, rng) for p in partials])


def run_chain_partial(partials: Sequence[PartialRanking], n1: int,
                      cfg: ChainConfig | None = None, mode: str = "pama",
                      rng: np.random.Generator | None = None, X=None,
                      steps: int | None = None) -> ChainResult:
    """Data-augmentation sampler.

    Every sweep first refreshes each incomplete list's completion, then runs one
    parameter sweep on the completed data. With no missingness this is exactly
    :func:`pama.bayes.run_chain`.
    """
    cfg = (cfg or ChainConfig()).validate()
    _validate_partials(partials)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    data = RankData(complete_all(partials, rng), X=X)
    imputer = _Imputer(partials, data, steps)
    state = initial_state(data, n1, mode, rng, cfg, ind=_initial_indicator(partials, n1))

    def before_sweep(st, r):
        if not imputer.rows:
            return
        fresh = imputer.refresh(st.ind, st.rel, st.gamma, st.phi, r)
        for l, (d, b, a) in fresh.items():
            st.d[l], st.logB[l], st.logA[l] = d, b, a
        st.log_post = log_posterior(st, data, cfg)

    res = run_chain(data, n1, cfg, mode, rng=rng, init=state, before_sweep=before_sweep)
    res.completions = data.P.copy()
    return res


def mcem_fit_partial(partials: Sequence[PartialRanking], n1: int,
                     cfg: MleConfig | None = None, rng: np.random.Generator | None = None,
                     samples: int | None = None, steps: int | None = None,
                     mode: str = "pama", X=None) -> MleResult:
    """Monte Carlo EM over the missing positions.

    The E-step keeps ``samples`` completions per incomplete list, spaced by
    ``steps`` Metropolis proposals; complete lists enter once with unit weight.
    The M-step is weighted coordinate ascent.
    """
    cfg = (cfg or MleConfig()).validate()
    n = _validate_partials(partials)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    base = RankData(complete_all(partials, rng), X=X)
    _check(base, n1, mode)
    m = base.m
    M = cfg.mcem_samples if samples is None else int(samples)
    if M < 1:
        raise ConfigError("need at least one completion per list")
    ind, phi, gamma, psi = _initial(base, n1, rng, m, mode)
    ind = _initial_indicator(partials, n1)
    imputer = _Imputer(partials, base, steps)
    incomplete = set(imputer.rows)

    trace = []
    converged = False
    pb = None
    it = 0
    for it in range(1, cfg.mcem_max_iter + 1):
        rows, owner, w = [], [], []
        rel = relevant_order(ind).astype(np.int64)
        labels = np.ascontiguousarray(ind, dtype=np.int64)
        draws = []
        if incomplete:
            for _ in range(M):
                imputer.refresh(labels, rel, gamma, phi, rng)
                draws.append(base.P[imputer.rows].copy())
        for l in range(m):
            if l in incomplete:
                pos = imputer.rows.index(l)
                for t in range(M):
                    rows.append(draws[t][pos])
                    owner.append(l)
                    w.append(1.0 / M)
            else:
                rows.append(base.P[l])
                owner.append(l)
                w.append(1.0)
        stacked = RankData(np.stack(rows), X=X)
        old = _Problem(stacked, n1, owner=owner, w=w, m=m)
        old.attach(ind, phi, gamma, psi)
        q_old = old.log_lik()
        pb, inner, inner_conv, cycles = fit_weighted(
            stacked, n1, owner, w, m, cfg, ind, phi, gamma, mode=mode, psi=psi)
        ind, phi, gamma = pb.ind.copy(), pb.phi, pb.gamma.copy()
        psi = None if pb.psi is None else pb.psi.copy()
        trace.append(float(inner[-1]))
        if not incomplete:
            # nothing to impute: a single M-step is the plain fit
            converged = inner_conv
            break
        if trace[-1] - q_old < cfg.tol:
            converged = True
            break
    res = _result(pb, np.asarray(trace), converged, it, mode)
    res.samples_used = [M] * it
    return res
