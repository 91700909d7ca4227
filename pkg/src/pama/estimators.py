"""scikit-learn style wrappers around the samplers and optimizers.

Input ``X`` is an ``(m, n)`` array with one ranking list per row: ``X[k, i]``
is the rank ranker ``k`` gives entity ``i``, or NaN if unranked.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bayes import ChainConfig, aggregate, posterior_summary, run_chain
from .data import RankData
from .metrics import coverage
from .mle import MleConfig, aggregate_mle, fit_mle, mcem_fit_pama_h
from .moment import indicator_from_means, moment_estimator, partial_mean_ranks
from .partial import mcem_fit_partial, run_chain_partial
from .rankings import PartialRanking, RankingError


def check_rankings(X):
    """Validate a ranking matrix.

    Returns ``(P, partials)``: ``P`` is the int matrix when every row is a
    full permutation, else ``None``; ``partials`` always holds one
    :class:`PartialRanking` per row.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise RankingError(f"expected a non-empty 2-d ranking matrix, got shape {X.shape}")
    m, n = X.shape
    partials = []
    for k, row in enumerate(X):
        seen = ~np.isnan(row)
        vals = row[seen]
        if np.any(vals != np.round(vals)) or np.any((vals < 1) | (vals > n)):
            raise RankingError(f"row {k}: ranks must be integers in 1..{n}")
        if np.unique(vals).size != vals.size:
            raise RankingError(f"row {k}: duplicate ranks")
        idx = np.flatnonzero(seen)
        order = idx[np.argsort(vals, kind="stable")]
        partials.append(PartialRanking(n, {int(e): r for r, e in enumerate(order, start=1)}))
    full = all(p.is_full for p in partials)
    P = X.astype(np.int64) if full else None
    return P, partials


def _ranks_from_ind(ind) -> np.ndarray:
    ind = np.asarray(ind)
    n, n1 = ind.size, int(np.count_nonzero(ind))
    return np.where(ind > 0, ind, (n + n1 + 1) / 2.0).astype(float)


class _Aggregator(BaseEstimator):
    """Shared predict/score plumbing; subclasses set ``ranking_`` in ``fit``."""

    def predict(self, X=None):
        """Aggregated rank of every entity (background tied where applicable)."""
        check_is_fitted(self, "ranking_")
        return self.ranking_.copy()

    def fit_predict(self, X, y=None, **kw):
        return self.fit(X, y, **kw).predict()

    def score(self, X, y):
        """Coverage of the true relevant set ``y`` (an indicator vector)."""
        check_is_fitted(self, "ranking_")
        return coverage(self.ranking_, np.asarray(y), int(np.count_nonzero(y)))

    @property
    def order_(self):
        check_is_fitted(self, "ranking_")
        return np.argsort(self.ranking_, kind="stable")


class PamaBayes(_Aggregator):
    """Posterior-mean aggregation by Metropolis-within-Gibbs sampling.

    Parameters
    ----------
    n1 : int
        Number of relevant entities.
    model : {"pama", "pama-h", "covariate"}
    iterations, burn_in, thin : int
        Chain length, discarded prefix and thinning interval.
    sigma_phi, sigma_gamma, sigma_psi : float
        Random-walk proposal scales.
    b : float
        Upper bound of the uniform priors.
    random_state : int or None
    """

    def __init__(self, n1=10, model="pama", iterations=10_000, burn_in=5_000, thin=5,
                 sigma_phi=0.1, sigma_gamma=0.1, sigma_psi=0.2, b=10.0, random_state=None):
        self.n1 = n1
        self.model = model
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.sigma_phi = sigma_phi
        self.sigma_gamma = sigma_gamma
        self.sigma_psi = sigma_psi
        self.b = b
        self.random_state = random_state

    def fit(self, X, y=None, covariates=None):
        P, partials = check_rankings(X)
        cfg = ChainConfig(iterations=self.iterations, burn_in=self.burn_in, thin=self.thin,
                          sigma_phi=self.sigma_phi, sigma_gamma=self.sigma_gamma,
                          sigma_psi=self.sigma_psi, b=self.b)
        rng = np.random.default_rng(self.random_state)
        if P is not None:
            res = run_chain(RankData(P, X=covariates), self.n1, cfg, mode=self.model, rng=rng)
        else:
            res = run_chain_partial(partials, self.n1, cfg, mode=self.model, rng=rng,
                                    X=covariates)
        s = posterior_summary(res)
        self.samples_ = res
        self.summary_ = s
        self.i_bar_ = s.i_bar
        self.phi_ = s.phi_bar
        self.gamma_ = s.gamma_bar
        self.ranking_ = aggregate(s).astype(float)
        return self


class PamaMLE(_Aggregator):
    """Maximum-likelihood aggregation by coordinate ascent (MCEM where needed).

    ``restarts`` adds random-indicator starts; ``polish_max_moves`` caps the
    neighbourhood size for the profile-likelihood polish after convergence.
    """

    def __init__(self, n1=10, model="pama", tol=0.1, max_cycles=200, newton_iters=5,
                 mcem_samples=200, restarts=1, polish_max_moves=40, random_state=None):
        self.n1 = n1
        self.restarts = restarts
        self.polish_max_moves = polish_max_moves
        self.model = model
        self.tol = tol
        self.max_cycles = max_cycles
        self.newton_iters = newton_iters
        self.mcem_samples = mcem_samples
        self.random_state = random_state

    def fit(self, X, y=None, covariates=None):
        P, partials = check_rankings(X)
        cfg = MleConfig(tol=self.tol, max_cycles=self.max_cycles,
                        newton_iters=self.newton_iters, mcem_samples=self.mcem_samples,
                        restarts=self.restarts, polish_max_moves=self.polish_max_moves)
        rng = np.random.default_rng(self.random_state)
        if self.model == "pama-h":
            if P is None:
                raise RankingError("the exponential-prior MLE needs full lists")
            res = mcem_fit_pama_h(RankData(P), self.n1, cfg, rng=rng)
        elif P is None:
            res = mcem_fit_partial(partials, self.n1, cfg, rng=rng, mode=self.model,
                                   X=covariates)
        else:
            res = fit_mle(RankData(P, X=covariates), self.n1, cfg, mode=self.model, rng=rng)
        self.result_ = res
        self.ind_ = res.params.ind
        self.phi_ = res.params.phi
        self.gamma_ = res.params.gamma
        self.psi_ = res.psi
        self.converged_ = res.converged
        self.ranking_ = aggregate_mle(res)
        return self


class MomentAggregator(_Aggregator):
    """Mean-rank moment estimator; background entities tie behind the top ``n1``."""

    def __init__(self, n1=10):
        self.n1 = n1

    def fit(self, X, y=None):
        P, partials = check_rankings(X)
        if P is not None:
            ind = moment_estimator(P, self.n1)
        else:
            ind = indicator_from_means(partial_mean_ranks(partials), self.n1)
        self.ind_ = ind
        self.ranking_ = _ranks_from_ind(ind)
        return self
