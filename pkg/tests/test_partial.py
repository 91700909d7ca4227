import numpy as np
import pytest
from scipy.stats import chisquare

from pama.bayes import ChainConfig, ConfigError, posterior_summary, run_chain
from pama.data import RankData
from pama.metrics import coverage
from pama.mle import MleConfig, fit_mle
from pama.model import PamaParams, sample_rankings
from pama.partial import (
    initial_completion,
    mcem_fit_partial,
    run_chain_partial,
    sample_compatible_full,
)
from pama.rankings import PartialRanking, is_compatible, project

from conftest import oracle_prob, perms, tv


def partial_of(tau, subset):
    return PartialRanking(len(tau), project(tau, subset))


class TestInitialCompletion:
    def test_full_unchanged(self, rng):
        tau = np.array([3, 1, 4, 2])
        state = rng.bit_generator.state
        out = initial_completion(PartialRanking.from_full(tau), rng)
        assert out.tolist() == tau.tolist()
        assert rng.bit_generator.state == state

    def test_empty_uniform(self, rng):
        counts = {}
        N = 24_000
        for _ in range(N):
            t = tuple(initial_completion(PartialRanking(4, {}), rng).tolist())
            counts[t] = counts.get(t, 0) + 1
        assert len(counts) == 24
        assert chisquare(list(counts.values())).pvalue > 1e-3

    def test_always_compatible(self, rng):
        for _ in range(10_000):
            n = int(rng.integers(1, 9))
            tau = rng.permutation(n) + 1
            sub = rng.choice(n, size=rng.integers(0, n + 1), replace=False)
            p = partial_of(tau, sub.tolist())
            assert is_compatible(initial_completion(p, rng), p)


def restricted_law(partial, ind, phi, gamma):
    law = {t: oracle_prob(t, ind, phi, gamma) for t in perms(partial.n)
           if is_compatible(np.array(t), partial)}
    z = sum(law.values())
    return {t: p / z for t, p in law.items()}


def run_restricted(partial, params, rng, draws, steps=3):
    cur = initial_completion(partial, rng)
    counts = {}
    for _ in range(draws):
        cur = sample_compatible_full(cur, partial, params, 0, steps, rng)
        k = tuple(cur.tolist())
        counts[k] = counts.get(k, 0) + 1
    return counts


class TestRestrictedSampler:
    def test_full_list_frozen(self, rng):
        p = PartialRanking.from_full([2, 1, 3, 4])
        params = PamaParams(np.array([1, 2, 0, 0]), 0.5, np.array([1.0]))
        out = sample_compatible_full(np.array([2, 1, 3, 4]), p, params, 0, 100, rng)
        assert out.tolist() == [2, 1, 3, 4]

    def test_uniform_target(self, rng):
        # with a single background entity every ranking has the same weight
        p = PartialRanking(4, {0: 2, 1: 1, 3: 3})
        params = PamaParams(np.array([1, 2, 0, 3]), 0.0, np.array([0.0]))
        counts = run_restricted(p, params, rng, 20_000)
        compatible = [t for t in perms(4) if is_compatible(np.array(t), p)]
        assert set(counts) == set(compatible) and len(compatible) == 4
        assert chisquare([counts[t] for t in compatible]).pvalue > 1e-3

    def test_exact_restricted_law(self, rng):
        p = PartialRanking(5, {0: 1, 2: 3, 4: 2})
        ind = np.array([1, 0, 2, 0, 0])
        params = PamaParams(ind, 0.7, np.array([1.1]))
        exact = restricted_law(p, ind, 0.7, 1.1)
        counts = run_restricted(p, params, rng, 40_000)
        assert set(counts) <= set(exact)
        assert tv(counts, exact) < 0.05

    def test_reaches_every_completion(self, rng):
        p = PartialRanking(6, {1: 1, 4: 2})
        params = PamaParams(np.array([0, 1, 0, 2, 0, 0]), 0.3, np.array([0.2]))
        counts = run_restricted(p, params, rng, 20_000)
        assert len(counts) == 720 // 2

    def test_outputs_compatible(self, rng):
        p = PartialRanking(7, {0: 2, 3: 1, 6: 3})
        params = PamaParams(np.array([1, 2, 3, 0, 0, 0, 0]), 1.0, np.array([2.0]))
        cur = initial_completion(p, rng)
        for _ in range(500):
            cur = sample_compatible_full(cur, p, params, 0, None, rng)
            assert is_compatible(cur, p)


def make_partials(rng, n=12, n1=3, m=6, frac=0.5, gamma=2.0):
    ind = np.zeros(n, dtype=int)
    ind[:n1] = np.arange(1, n1 + 1)
    P = sample_rankings(ind, 0.8, [gamma] * m, rng)
    partials = []
    for tau in P:
        sub = rng.choice(n, size=max(1, int(frac * n)), replace=False)
        partials.append(partial_of(tau, sub.tolist()))
    return partials, ind


class TestChainPartial:
    def test_reduces_to_full_chain(self):
        rng = np.random.default_rng(3)
        ind = np.array([1, 2, 0, 0, 0, 0, 0])
        P = sample_rankings(ind, 0.8, [1.0, 1.5, 2.0], rng)
        cfg = ChainConfig(iterations=200, burn_in=50, thin=1)
        a = run_chain_partial([PartialRanking.from_full(t) for t in P], 2, cfg,
                              rng=np.random.default_rng(8))
        b = run_chain(RankData(P), 2, cfg, rng=np.random.default_rng(8))
        assert np.array_equal(a.trace, b.trace)
        assert np.array_equal(a.labels, b.labels)

    def test_completions_compatible(self, rng):
        partials, _ = make_partials(rng)
        res = run_chain_partial(partials, 3, ChainConfig(iterations=100, burn_in=50), rng=rng)
        assert all(is_compatible(c, p) for c, p in zip(res.completions, partials))

    def test_dominant_entity_first(self, rng):
        n = 10
        partials = []
        for k in range(6):
            sub = rng.choice(np.arange(1, n), size=4, replace=False).tolist()
            order = [0] + sub
            partials.append(PartialRanking(n, {e: r for r, e in enumerate(order, start=1)}))
        res = run_chain_partial(partials, 3, ChainConfig(iterations=1500, burn_in=500), rng=rng)
        i_bar = posterior_summary(res).i_bar
        assert np.argmin(i_bar) == 0

    def test_mismatched_universe(self):
        with pytest.raises(ConfigError):
            run_chain_partial([PartialRanking(3, {0: 1}), PartialRanking(4, {0: 1})], 1,
                              ChainConfig(iterations=5, burn_in=0))

    @pytest.mark.slow
    def test_league_sized_input(self, rng):
        import time

        partials, _ = make_partials(rng, n=30, n1=16, m=34, frac=0.7, gamma=1.0)
        t0 = time.perf_counter()
        run_chain_partial(partials, 16, ChainConfig(iterations=10_000, burn_in=5000), rng=rng)
        assert time.perf_counter() - t0 < 600


class TestMcemPartial:
    def test_full_lists_match_mle(self):
        rng = np.random.default_rng(2)
        ind = np.array([1, 2, 3, 0, 0, 0, 0, 0])
        P = sample_rankings(ind, 0.8, [0.5, 1.5, 2.5, 1.0], rng)
        cfg = MleConfig(seed=4)
        a = mcem_fit_partial([PartialRanking.from_full(t) for t in P], 3, cfg, samples=1,
                             rng=np.random.default_rng(4))
        b = fit_mle(RankData(P), 3, cfg, rng=np.random.default_rng(4))
        assert np.array_equal(a.params.ind, b.params.ind)
        assert a.params.phi == pytest.approx(b.params.phi, abs=1e-12)
        assert np.allclose(a.params.gamma, b.params.gamma, atol=1e-12)

    def test_trace_within_noise(self, rng):
        partials, _ = make_partials(rng)
        res = mcem_fit_partial(partials, 3, MleConfig(mcem_max_iter=8), samples=10, rng=rng)
        tr = np.asarray(res.trace)
        assert tr.size >= 1 and np.all(np.isfinite(tr))
        # Monte Carlo slack: a drop never exceeds a small fraction of the scale
        assert np.all(np.diff(tr) > -0.05 * np.abs(tr[:-1]))

    def test_no_samples(self, rng):
        partials, _ = make_partials(rng)
        with pytest.raises(ConfigError):
            mcem_fit_partial(partials, 3, samples=0, rng=rng)

    @pytest.mark.slow
    def test_coverage_replicates(self):
        covs = []
        for r in range(50):
            rng = np.random.default_rng(9000 + r)
            partials, ind = make_partials(rng, n=20, n1=5, m=10, frac=0.5, gamma=3.0)
            res = mcem_fit_partial(partials, 5, MleConfig(mcem_max_iter=20), samples=20, rng=rng)
            hat = np.where(res.params.ind > 0, res.params.ind, 99)
            covs.append(coverage(hat, ind, 5))
        assert np.median(covs) >= 0.8
