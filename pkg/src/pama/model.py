"""The partition-Mallows probability model.

Per-list log-likelihood given the enhanced indicator ``ind``, the common
factor ``phi`` and the ranker quality ``gamma``::

    -log A - gamma * log B - n0 * log C(gamma) - phi * gamma * d - log Z(phi * gamma)

where ``d`` is the Kendall distance between the relevant entities' relative
order and the indicator's order, ``B`` the product of background slot values,
``A`` the number of compatible background orderings, ``C`` the truncated
power-law normalizer and ``Z`` the Mallows normalizer.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import lgamma

import numpy as np
from scipy.special import expit, logsumexp

from .rankings import (
    as_indicator,
    compatible_count,
    decompose,
    kendall_tau,
)

# switch to Taylor series for log((1 - e^-x) / x) and its derivatives below this
_SERIES_X = 1e-2


def _log1mexp(x):
    """log(1 - exp(-x)) for x > 0."""
    x = np.asarray(x, dtype=float)
    return np.where(x > np.log(2.0), np.log1p(-np.exp(-x)), np.log(-np.expm1(-x)))


def _f0(x):
    # log((1 - e^-x) / x), analytic at 0
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, 1.0, x)
    exact = _log1mexp(xs) - np.log(xs)
    series = -x / 2.0 + x**2 / 24.0 - x**4 / 2880.0
    return np.where(small, series, exact)


def log_z_mallows(n1: int, theta):
    """Log normalizing constant of the Kendall-distance Mallows model on n1 items.

    Written as ``log n1! + sum_t [f(t theta) - f(theta)]`` so that ``theta = 0``
    gives ``log n1!`` exactly and small ``theta`` keeps full precision.
    """
    theta = np.asarray(theta, dtype=float)
    if n1 <= 1:
        return np.zeros_like(theta)[()]
    t = np.arange(2, n1 + 1, dtype=float)
    out = lgamma(n1 + 1) + _f0(np.multiply.outer(theta, t)).sum(axis=-1) - (n1 - 1) * _f0(theta)
    return out[()]


def _f1(x):
    # derivative of log((1 - e^-x) / x)
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, 1.0, x)
    exact = np.exp(-xs) / -np.expm1(-xs) - 1.0 / xs
    series = -0.5 + x / 12.0 - x**3 / 720.0
    return np.where(small, series, exact)


def _f2(x):
    x = np.asarray(x, dtype=float)
    small = x < _SERIES_X
    xs = np.where(small, 1.0, x)
    # e^x / (e^x - 1)^2 written with e^-x to avoid overflow
    exact = -np.exp(-xs) / np.expm1(-xs) ** 2 + 1.0 / xs**2
    series = 1.0 / 12.0 - x**2 / 240.0
    return np.where(small, series, exact)


def dlog_z_mallows(n1: int, theta):
    """First and second derivatives of :func:`log_z_mallows` in ``theta``."""
    theta = np.asarray(theta, dtype=float)
    if n1 <= 1:
        z = np.zeros_like(theta)
        return z[()], z[()]
    t = np.arange(2, n1 + 1, dtype=float)
    x = np.multiply.outer(theta, t)
    d1 = (t * _f1(x)).sum(axis=-1) - (n1 - 1) * _f1(theta)
    d2 = (t**2 * _f2(x)).sum(axis=-1) - (n1 - 1) * _f2(theta)
    return d1[()], d2[()]


def _lse(a):
    # plain log-sum-exp over the last axis; scipy's version is slow for tiny arrays
    mx = a.max(axis=-1, keepdims=True)
    return np.log(np.exp(a - mx).sum(axis=-1)) + mx[..., 0]


def log_power_law_norm(gamma, n1: int):
    """log sum_{t=1}^{n1+1} t^-gamma."""
    gamma = np.asarray(gamma, dtype=float)
    logt = np.log(np.arange(1, n1 + 2, dtype=float))
    out = _lse(-np.multiply.outer(gamma, logt))
    return out[()]


def dlog_power_law_norm(gamma, n1: int):
    """First and second derivatives of :func:`log_power_law_norm` in ``gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    logt = np.log(np.arange(1, n1 + 2, dtype=float))
    a = -np.multiply.outer(gamma, logt)
    p = np.exp(a - _lse(a)[..., None])
    m1 = (p * logt).sum(axis=-1)
    m2 = (p * logt**2).sum(axis=-1)
    # log C is a log-partition function in -gamma: d/dgamma = -E[log t], d2 = Var[log t]
    return (-m1)[()], (m2 - m1**2)[()]


@dataclass(frozen=True)
class ModelTerms:
    """Sufficient statistics of one list under a given indicator."""

    logA: float
    logB: float
    d: int
    n: int
    n1: int

    def log_lik(self, phi: float, gamma: float) -> float:
        n0 = self.n - self.n1
        return float(
            -self.logA
            - gamma * self.logB
            - n0 * log_power_law_norm(gamma, self.n1)
            - phi * gamma * self.d
            - log_z_mallows(self.n1, phi * gamma)
        )


def model_terms(tau, ind) -> ModelTerms:
    dec = decompose(tau, ind)
    ind = np.asarray(ind)
    d = kendall_tau(dec.tau1, ind[dec.relevant])
    logB = float(np.log(dec.tau01).sum()) if dec.tau01.size else 0.0
    logA = float(np.log(compatible_count(dec.tau01))) if dec.tau01.size else 0.0
    return ModelTerms(logA=logA, logB=logB, d=int(d), n=len(ind), n1=dec.n1)


def log_lik_single(tau, ind, phi: float, gamma_k: float) -> float:
    return model_terms(tau, ind).log_lik(phi, gamma_k)


@dataclass
class PamaParams:
    """Indicator, common quality factor and per-ranker qualities."""

    ind: np.ndarray
    phi: float
    gamma: np.ndarray

    def __post_init__(self):
        self.ind = as_indicator(self.ind)
        self.gamma = np.asarray(self.gamma, dtype=float)
        if self.phi < 0 or np.any(self.gamma < 0):
            raise ValueError("phi and gamma must be nonnegative")

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.ind))


def log_lik_joint(taus, params: PamaParams) -> float:
    taus = np.atleast_2d(taus)
    if taus.shape[0] != params.gamma.size:
        raise ValueError("need one quality parameter per list")
    return float(sum(
        log_lik_single(tau, params.ind, params.phi, g) for tau, g in zip(taus, params.gamma)
    ))


def _truncated_geometric(theta: float, upper, u):
    """Inverse-CDF draw of ``j`` in ``0..upper`` with ``P(j) ~ exp(-theta j)``."""
    upper = np.asarray(upper)
    if theta == 0.0:
        return np.minimum(np.floor(u * (upper + 1)), upper).astype(np.int64)
    tail = -np.expm1(-theta * (upper + 1))
    j = np.floor(-np.log1p(-u * tail) / theta)
    return np.clip(j, 0, upper).astype(np.int64)


def _insertion_positions(disp: np.ndarray) -> np.ndarray:
    """Final 0-based positions from per-item insertion displacements.

    ``disp[:, i]`` counts how many places before the end item ``i`` was
    inserted; works row-wise on a batch.
    """
    size, n1 = disp.shape
    pos = np.zeros((size, n1), dtype=np.int64)
    for i in range(n1):
        p = (i - disp[:, i])[:, None]
        pos[:, :i] += pos[:, :i] >= p
        pos[:, i] = p[:, 0]
    return pos


def sample_mallows(n1: int, theta: float, rng: np.random.Generator, size: int | None = None):
    """Sequential-insertion draw of relative ranks centred at the identity.

    Item ``i`` (0-based reference order) is inserted ``j`` places before the
    end of the current sequence, ``j`` truncated-geometric with rate ``theta``.
    Returns ``r`` with ``r[a]`` the position (1-based) of the item whose
    reference rank is ``a + 1``; with ``size`` a ``(size, n1)`` batch.
    """
    shape = 1 if size is None else size
    if np.isinf(theta):
        out = np.tile(np.arange(1, n1 + 1, dtype=np.int64), (shape, 1))
    else:
        disp = _truncated_geometric(theta, np.arange(n1), rng.random((shape, n1)))
        out = _insertion_positions(disp) + 1
    return out[0] if size is None else out


def sample_ranking(ind, phi: float, gamma_k: float, rng: np.random.Generator,
                   size: int | None = None) -> np.ndarray:
    """Draw full rankings from the generative model.

    Mallows relative order of the relevant entities, i.i.d. power-law slots
    for the background, and a uniformly random order within each slot.
    Returns one ranking, or a ``(size, n)`` batch of independent draws.
    """
    ind = as_indicator(ind)
    relevant = np.flatnonzero(ind > 0)
    background = np.flatnonzero(ind == 0)
    n, n1, n0 = ind.size, relevant.size, background.size
    S = 1 if size is None else size
    # relative ranks by label order, realigned to entity-index order
    r = sample_mallows(n1, phi * gamma_k, rng, size=S)
    tau1 = r[:, ind[relevant] - 1]
    if np.isinf(gamma_k):
        slots = np.ones((S, n0), dtype=np.int64)
    else:
        logw = -gamma_k * np.log(np.arange(1, n1 + 2, dtype=float))
        cdf = np.cumsum(np.exp(logw - logsumexp(logw)))
        slots = np.minimum(np.searchsorted(cdf, rng.random((S, n0)), side="right"), n1) + 1
    within = np.argsort(rng.random((S, n0)), axis=1)
    # walk from the top: slot n1+1 background, relevant rank 1, slot n1, ...
    key = np.empty((S, n), dtype=np.int64)
    key[:, relevant] = (2 * tau1 - 1) * (n0 + 1)
    key[:, background] = 2 * (n1 + 1 - slots) * (n0 + 1) + within
    order = np.argsort(key, axis=1, kind="stable")
    tau = np.empty((S, n), dtype=np.int64)
    np.put_along_axis(tau, order, np.arange(1, n + 1)[None, :].repeat(S, 0), axis=1)
    return tau[0] if size is None else tau


def sample_rankings(ind, phi: float, gamma, rng: np.random.Generator) -> np.ndarray:
    """One ranking per entry of ``gamma``; returns an ``(m, n)`` array."""
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    return np.stack([sample_ranking(ind, phi, g, rng) for g in gamma])


@dataclass(frozen=True)
class CovariateModel:
    X: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        if X.shape[1] != psi.size:
            raise ValueError(f"X has {X.shape[1]} columns but psi has {psi.size} entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "psi", psi)


def covariate_log_prior(ind, cov: CovariateModel) -> float:
    """Logistic log-probability of the relevant/background split."""
    ind = np.asarray(ind)
    if cov.X.shape[0] != ind.size:
        raise ValueError(f"X has {cov.X.shape[0]} rows but there are {ind.size} entities")
    eta = cov.X @ cov.psi
    rel = (ind > 0).astype(float)
    return float(np.sum(rel * eta - np.logaddexp(0.0, eta)))


def relevance_probability(X, psi) -> np.ndarray:
    return expit(np.asarray(X, dtype=float) @ np.asarray(psi, dtype=float))


@dataclass(frozen=True)
class HyperPrior:
    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


def pama_h_log_prior(gamma, hp: HyperPrior) -> float:
    """Exponential log-density of the ranker qualities."""
    gamma = np.asarray(gamma, dtype=float)
    return float(np.sum(np.log(hp.alpha) - hp.alpha * gamma))
