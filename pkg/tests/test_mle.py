import numpy as np
import pytest

from pama.bayes import ConfigError
from pama.data import RankData
from pama.metrics import recovery_distance
from pama.mle import (
    MleConfig,
    MleResult,
    aggregate_mle,
    alpha_mle,
    ascent_search_indicator,
    fit_mle,
    gamma_objective,
    mcem_fit_pama_h,
    newton_step_gamma,
    newton_step_phi,
    phi_objective,
)
from pama.model import PamaParams, log_lik_joint, sample_rankings
from pama.simulate import ScenarioConfig, generate

from conftest import oracle_log_lik, profile_argmax


def central(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestObjectives:
    def test_gamma_objective_tracks_likelihood(self, rng):
        ind = np.array([0, 1, 0, 2, 0, 0])
        P = sample_rankings(ind, 0.7, [1.0, 1.0], rng)
        data = RankData(P)
        d, logB, _ = data.stats(ind)
        diffs = []
        for g in (0.2, 0.9, 2.5):
            full = oracle_log_lik(P[:1], ind, 0.7, [g])
            obj = gamma_objective(g, 0.7, 1.0, logB[0], d[0], 4, 2)[0]
            diffs.append(full - obj)
        assert np.ptp(diffs) < 1e-10

    def test_phi_objective_tracks_likelihood(self, rng):
        ind = np.array([2, 0, 1, 0, 3])
        g = np.array([0.4, 1.7, 0.9])
        P = sample_rankings(ind, 0.7, g, rng)
        d, _, _ = RankData(P).stats(ind)
        diffs = [oracle_log_lik(P, ind, phi, g) - phi_objective(phi, g, d, np.ones(3), 3)[0]
                 for phi in (0.1, 0.8, 2.0)]
        assert np.ptp(diffs) < 1e-10

    def test_gamma_derivatives(self, rng):
        for _ in range(20):
            n1, n0 = int(rng.integers(2, 9)), int(rng.integers(1, 30))
            phi, g = rng.uniform(0.05, 3, size=2)
            W, SB, SD = 1.0, rng.uniform(0, 15), float(rng.integers(0, 15))
            f = lambda x, i=0: gamma_objective(x, phi, W, SB, SD, n0, n1)[i]
            _, g1, g2 = gamma_objective(g, phi, W, SB, SD, n0, n1)
            assert g1 == pytest.approx(central(f, g), rel=1e-4, abs=1e-7)
            assert g2 == pytest.approx(central(lambda x: f(x, 1), g), rel=1e-4, abs=1e-7)

    def test_phi_derivatives(self, rng):
        for _ in range(20):
            n1 = int(rng.integers(2, 9))
            gam = rng.uniform(0.05, 3, size=4)
            SD = rng.integers(0, 12, size=4).astype(float)
            phi = rng.uniform(0.05, 3)
            f = lambda x, i=0: phi_objective(x, gam, SD, np.ones(4), n1)[i]
            _, g1, g2 = phi_objective(phi, gam, SD, np.ones(4), n1)
            assert g1 == pytest.approx(central(f, phi), rel=1e-4, abs=1e-7)
            assert g2 == pytest.approx(central(lambda x: f(x, 1), phi), rel=1e-4, abs=1e-7)

    def test_concavity(self, rng):
        for _ in range(10):
            g2 = gamma_objective(rng.uniform(0, 5), rng.uniform(0, 3), 1.0, 3.0, 4.0, 10, 5)[2]
            assert g2 < 0


class TestNewtonSteps:
    def _setup(self, rng, m=4):
        ind = np.array([1, 0, 2, 0, 3, 0, 0, 0])
        P = sample_rankings(ind, 0.8, rng.uniform(0.2, 2.5, size=m), rng)
        return RankData(P), ind

    def test_gamma_step_ascends(self, rng):
        data, ind = self._setup(rng)
        for _ in range(10):
            p = PamaParams(ind, rng.uniform(0.1, 2), rng.uniform(0, 5, size=4))
            k = int(rng.integers(4))
            new = newton_step_gamma(p, k, data)
            q = PamaParams(ind, p.phi, np.where(np.arange(4) == k, new, p.gamma))
            assert log_lik_joint(data.P, q) >= log_lik_joint(data.P, p) - 1e-12
            assert 0.0 <= new <= MleConfig().bound

    def test_gamma_stationary_point(self, rng):
        data, ind = self._setup(rng)
        p = PamaParams(ind, 0.9, np.full(4, 1.0))
        cfg = MleConfig(newton_iters=200)
        g_star = newton_step_gamma(p, 2, data, cfg)
        assert 0.0 < g_star < cfg.bound
        q = PamaParams(ind, 0.9, np.where(np.arange(4) == 2, g_star, 1.0))
        assert newton_step_gamma(q, 2, data, cfg) == pytest.approx(g_star, abs=1e-8)

    def test_phi_step_ascends(self, rng):
        data, ind = self._setup(rng)
        for _ in range(10):
            p = PamaParams(ind, rng.uniform(0, 5), rng.uniform(0.1, 3, size=4))
            q = PamaParams(ind, newton_step_phi(p, data), p.gamma)
            assert log_lik_joint(data.P, q) >= log_lik_joint(data.P, p) - 1e-12

    def test_phi_frozen_without_quality(self, rng):
        data, ind = self._setup(rng)
        p = PamaParams(ind, 1.234, np.zeros(4))
        assert newton_step_phi(p, data) == 1.234


class TestIndicatorSearch:
    def test_local_optimum_unchanged(self, rng):
        ind = np.array([0, 1, 0, 2, 3, 0, 0])
        P = sample_rankings(ind, 0.8, [2.0] * 5, rng)
        p = PamaParams(ind, 0.8, np.full(5, 2.0))
        first = ascent_search_indicator(p, RankData(P))
        again = ascent_search_indicator(PamaParams(first, 0.8, p.gamma), RankData(P))
        assert again.tolist() == first.tolist()

    def test_search_never_decreases(self, rng):
        for _ in range(20):
            ind = np.array([1, 2, 3, 0, 0, 0, 0])
            P = sample_rankings(ind, 0.6, rng.uniform(0.3, 2, size=4), rng)
            start = np.zeros(7, dtype=int)
            start[rng.choice(7, 3, replace=False)] = [1, 2, 3]
            p = PamaParams(start, 0.6, np.full(4, 1.0))
            out = ascent_search_indicator(p, RankData(P))
            assert log_lik_joint(P, PamaParams(out, 0.6, p.gamma)) >= log_lik_joint(P, p) - 1e-9

    def test_matches_exhaustive_argmax(self, rng):
        # fixed phi and gamma: the ascent should land on the best indicator
        hits = 0
        from itertools import permutations
        for _ in range(10):
            ind = np.array([1, 2, 0, 0, 0])
            P = sample_rankings(ind, 1.0, [3.0] * 5, rng)
            p = PamaParams(np.array([0, 0, 0, 1, 2]), 1.0, np.full(5, 3.0))
            out = ascent_search_indicator(p, RankData(P))
            lls = {}
            for a, b in permutations(range(5), 2):
                cand = np.zeros(5, dtype=int)
                cand[a], cand[b] = 1, 2
                lls[(a, b)] = oracle_log_lik(P, cand, 1.0, [3.0] * 5)
            a, b = max(lls, key=lls.get)
            hits += out[a] == 1 and out[b] == 2
        assert hits >= 9


class TestFit:
    def test_trace_monotone(self, rng):
        for _ in range(10):
            cfg = ScenarioConfig.preset("S_PM1", n=20, m=6, n1=4)
            P, _ = generate(cfg, rng)
            res = fit_mle(RankData(P), 4, rng=rng)
            assert np.all(np.diff(res.trace) >= -1e-8)
            assert res.log_lik == pytest.approx(
                log_lik_joint(P, res.params), rel=1e-10, abs=1e-8)

    def test_huge_tolerance_one_cycle(self, rng):
        ind = np.array([1, 2, 3, 0, 0, 0, 0, 0])
        P = sample_rankings(ind, 0.8, [1.5] * 6, rng)
        res = fit_mle(RankData(P), 3, MleConfig(tol=1e12), rng=rng)
        assert res.converged and res.cycles_used == 1

    def test_deterministic(self):
        P, _ = generate(ScenarioConfig.preset("S_PM1", n=20, m=6, n1=4), np.random.default_rng(3))
        a = fit_mle(RankData(P), 4, MleConfig(seed=11))
        b = fit_mle(RankData(P), 4, MleConfig(seed=11))
        assert np.array_equal(a.params.ind, b.params.ind)
        assert a.params.phi == b.params.phi and np.array_equal(a.params.gamma, b.params.gamma)
        assert np.array_equal(a.trace, b.trace)

    def test_nonconvergence_reported(self, rng):
        P, _ = generate(ScenarioConfig.preset("S_PM1", n=20, m=6, n1=4), rng)
        res = fit_mle(RankData(P), 4, MleConfig(max_cycles=1, tol=1e-12), rng=rng)
        assert not res.converged and res.cycles_used == 1

    def test_unidentified_flag(self):
        # background ahead of a reversed relevant set: both factors push gamma to 0
        P = np.array([[8, 7, 6, 5, 1, 2, 3, 4]] * 6)
        res = fit_mle(RankData(P), 4, rng=np.random.default_rng(0),
                      init=PamaParams(np.array([1, 2, 3, 4, 0, 0, 0, 0]), 1.0, np.ones(6)),
                      cfg=MleConfig(max_passes=0, polish_max_moves=0))
        assert np.all(res.params.gamma == 0) and res.unidentified

    def test_validation(self, rng):
        data = RankData(np.array([[1, 2, 3]]))
        with pytest.raises(ConfigError):
            fit_mle(data, 0)
        with pytest.raises(ConfigError):
            fit_mle(data, 1, mode="covariate")
        with pytest.raises(ConfigError):
            MleConfig(tol=0).validate()

    def test_covariate_mode(self, rng):
        n = 20
        ind = np.zeros(n, dtype=int)
        ind[:4] = [1, 2, 3, 4]
        X = np.c_[np.where(ind > 0, 1.0, -1.0) + 0.1 * rng.standard_normal(n)]
        P = sample_rankings(ind, 0.6, [2.0] * 6, rng)
        res = fit_mle(RankData(P, X=X), 4, mode="covariate", rng=rng)
        assert res.psi.shape == (1,) and res.psi[0] > 0
        assert np.all(np.diff(res.trace) >= -1e-8)

    @pytest.mark.slow
    def test_quality_ordering_replicates(self):
        good = 0
        for r in range(100):
            rng = np.random.default_rng(1000 + r)
            P, truth = generate(ScenarioConfig.preset("S_PM1", n=30, m=10, n1=5), rng)
            g = fit_mle(RankData(P), 5, rng=rng).params.gamma
            good += g[5:].min() > g[:5].max()
        assert good >= 90


class TestExhaustiveArgmax:
    def test_strong_signal(self):
        hits = 0
        for r in range(10):
            rng = np.random.default_rng(500 + r)
            ind = np.zeros(5, dtype=int)
            ind[rng.choice(5, 2, replace=False)] = [1, 2]
            P = sample_rankings(ind, 1.0, [2.5] * 5, rng)
            best, _ = profile_argmax(P, 2)
            res = fit_mle(RankData(P), 2, rng=rng)
            hits += np.array_equal(res.params.ind, best)
        assert hits >= 9


class TestAggregate:
    def _res(self, ind):
        ind = np.asarray(ind)
        return MleResult(PamaParams(ind, 1.0, np.ones(1)), 0.0, True, 1, np.zeros(1))

    def test_tied_background(self):
        assert aggregate_mle(self._res([1, 2, 0, 0])).tolist() == [1, 2, 3.5, 3.5]

    def test_no_background(self):
        assert aggregate_mle(self._res([2, 3, 1])).tolist() == [2, 3, 1]

    def test_metric_cross_check(self):
        n, n1 = 10, 3
        hat = aggregate_mle(self._res([1, 0, 0, 2, 0, 0, 0, 0, 0, 3]))
        truth = np.array([1, 2, 3, 0, 0, 0, 0, 0, 0, 0])
        # entities 1, 2 missed; entity 0 found at rank 1
        assert recovery_distance(hat, truth, n, n1) == 2 * (n + n1 + 1) / 2


class TestMcem:
    def test_alpha_constant_samples(self):
        assert alpha_mle(np.full(50, 0.4)) == pytest.approx(2.5)

    def test_runs_and_monotone(self, rng):
        ind = np.zeros(20, dtype=int)
        ind[:4] = [1, 2, 3, 4]
        gam = rng.exponential(1.0, size=12)
        P = sample_rankings(ind, 0.8, gam, rng)
        cfg = MleConfig(mcem_samples=100, mcem_max_iter=15)
        res = mcem_fit_pama_h(RankData(P), 4, cfg, rng=rng)
        assert res.alpha > 0 and res.mode == "pama-h"
        assert len(res.samples_used) == res.cycles_used
        assert np.all(np.diff(res.samples_used) >= 0)
        assert np.isfinite(res.log_lik)

    def test_q_nondecreasing_within_noise(self, rng):
        from pama import mle as mle_mod

        ind = np.zeros(15, dtype=int)
        ind[:3] = [1, 2, 3]
        P = sample_rankings(ind, 0.8, rng.exponential(1.0, size=10), rng)
        calls = []
        real = mle_mod._q_hat

        def spy(pb, samples, alpha):
            out = real(pb, samples, alpha)
            calls.append((id(samples), samples, out))
            return out

        mp = pytest.MonkeyPatch()
        mp.setattr(mle_mod, "_q_hat", spy)
        try:
            mcem_fit_pama_h(RankData(P), 3, MleConfig(mcem_samples=80, mcem_max_iter=10), rng=rng)
        finally:
            mp.undo()
        # group by draw set: first value is Q before the M-step, last is after
        groups = {}
        for key, samples, out in calls:
            groups.setdefault(key, (samples, []))[1].append(out)
        assert len(groups) >= 1
        for _, outs in groups.values():
            (q0, se), (q1, _) = outs[0], outs[-1]
            assert q1 >= q0 - 3 * se - 1e-9

    @pytest.mark.slow
    def test_alpha_consistency(self):
        errs = {50: [], 200: []}
        for m in errs:
            for r in range(50):
                rng = np.random.default_rng(7000 + r + m)
                ind = np.zeros(20, dtype=int)
                ind[:5] = [1, 2, 3, 4, 5]
                P = sample_rankings(ind, 1.0, rng.exponential(1.0, size=m), rng)
                res = mcem_fit_pama_h(RankData(P), 5,
                                      MleConfig(mcem_samples=50, mcem_max_iter=10), rng=rng)
                errs[m].append(abs(res.alpha - 1.0))
        assert np.median(errs[200]) < np.median(errs[50])
