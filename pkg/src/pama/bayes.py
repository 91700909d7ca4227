"""Metropolis-within-Gibbs posterior sampling for the partition-Mallows model.

Three model variants share one sampler:

``pama``
    uniform priors on the indicator, on ``phi`` and on each ``gamma_k`` over
    ``[0, b]``.
``pama-h``
    ``gamma_k`` i.i.d. exponential with rate ``alpha``; ``alpha`` has a
    conjugate Gamma prior and is drawn exactly.
``covariate``
    a logistic regression of relevance on entity covariates replaces the
    uniform indicator prior; its coefficients ``psi`` are updated by
    coordinate-wise random-walk Metropolis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .data import RankData
from .model import (
    PamaParams,
    covariate_log_prior,
    CovariateModel,
    log_power_law_norm,
    log_z_mallows,
)
from .moment import moment_estimator
from .rankings import as_indicator, relevant_order

logger = logging.getLogger(__name__)

MODES = ("pama", "pama-h", "covariate")
BLOCKS = ("indicator", "phi", "gamma", "psi", "alpha")


class ConfigError(ValueError):
    """Invalid sampler or optimizer configuration."""


@dataclass
class ChainConfig:
    iterations: int = 10_000
    burn_in: int = 5_000
    thin: int = 5
    b: float = 10.0
    sigma_phi: float = 0.1
    sigma_gamma: float = 0.1
    sigma_psi: float = 0.2
    psi_bound: float = 20.0
    alpha_prior: tuple[float, float] = (1.0, 1.0)
    # indicator proposals per sweep; None means one per entity
    indicator_moves: int | None = None
    seed: int | None = None

    def validate(self) -> "ChainConfig":
        if self.iterations <= 0 or self.burn_in < 0 or self.thin < 1:
            raise ConfigError("iterations must be positive, burn_in nonnegative, thin >= 1")
        if self.burn_in >= self.iterations:
            raise ConfigError(
                f"burn_in ({self.burn_in}) must be smaller than iterations ({self.iterations}); "
                "no samples would be kept"
            )
        if min(self.sigma_phi, self.sigma_gamma, self.sigma_psi) <= 0:
            raise ConfigError("proposal standard deviations must be positive")
        if self.b <= 0 or self.psi_bound <= 0:
            raise ConfigError("prior bounds must be positive")
        a0, b0 = self.alpha_prior
        if a0 <= 0 or b0 < 0:
            raise ConfigError("alpha prior needs shape > 0 and rate >= 0")
        return self

    @property
    def kept(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass
class ChainState:
    """Current parameter values plus cached per-list statistics."""

    ind: np.ndarray
    phi: float
    gamma: np.ndarray
    mode: str = "pama"
    psi: np.ndarray | None = None
    alpha: float | None = None
    log_post: float = float("nan")
    accepted: dict = field(default_factory=lambda: dict.fromkeys(BLOCKS, 0))
    proposed: dict = field(default_factory=lambda: dict.fromkeys(BLOCKS, 0))

    @property
    def params(self) -> PamaParams:
        return PamaParams(self.ind.copy(), self.phi, self.gamma.copy())

    @property
    def n1(self) -> int:
        return int(self.rel.size)

    def acceptance_rates(self) -> dict:
        return {
            k: self.accepted[k] / self.proposed[k] for k in BLOCKS if self.proposed[k] > 0
        }


def attach(state: ChainState, data: RankData) -> ChainState:
    """(Re)compute the cached statistics of ``state`` for ``data``."""
    state.ind = np.ascontiguousarray(as_indicator(state.ind), dtype=np.int64)
    state.gamma = np.asarray(state.gamma, dtype=float).copy()
    state.rel = relevant_order(state.ind).astype(np.int64)
    state.bg = np.flatnonzero(state.ind == 0).astype(np.int64)
    state.d, state.logB, state.logA = data.stats(state.ind)
    state.log_post = log_posterior(state, data)
    return state


def list_log_lik(state: ChainState, data: RankData, gamma=None, phi=None) -> np.ndarray:
    """Per-list log-likelihood from the cached statistics."""
    gamma = state.gamma if gamma is None else np.asarray(gamma, dtype=float)
    phi = state.phi if phi is None else phi
    n1 = state.n1
    n0 = data.n - n1
    theta = phi * gamma
    return (
        -state.logA
        - gamma * state.logB
        - n0 * log_power_law_norm(gamma, n1)
        - theta * state.d
        - log_z_mallows(n1, theta)
    )


def _xpsi(state: ChainState, data: RankData) -> np.ndarray:
    if state.mode == "covariate":
        return np.ascontiguousarray(data.X @ state.psi)
    return np.zeros(data.n)


def log_prior(state: ChainState, data: RankData, cfg: ChainConfig | None = None) -> float:
    """Non-constant part of the log prior."""
    if state.mode == "pama-h":
        a0, b0 = cfg.alpha_prior if cfg is not None else (1.0, 1.0)
        a = state.alpha
        return float(
            np.sum(np.log(a) - a * state.gamma) + (a0 - 1.0) * np.log(a) - b0 * a
        )
    if state.mode == "covariate":
        return covariate_log_prior(state.ind, CovariateModel(data.X, state.psi))
    return 0.0


def log_posterior(state: ChainState, data: RankData, cfg: ChainConfig | None = None) -> float:
    return float(list_log_lik(state, data).sum()) + log_prior(state, data, cfg)


def _refresh(state, data, cfg):
    state.log_post = log_posterior(state, data, cfg)
    return state


# log full conditionals, up to constants; module-level so tests can stub them

def _phi_log_conditional(phi: float, state: ChainState, data: RankData) -> float:
    theta = phi * state.gamma
    return float(np.sum(-theta * state.d - log_z_mallows(state.n1, theta)))


def _gamma_log_conditional(gamma, state: ChainState, data: RankData) -> np.ndarray:
    """Elementwise conditional of each ``gamma_k`` evaluated at ``gamma``."""
    out = list_log_lik(state, data, gamma=gamma) + state.logA
    if state.mode == "pama-h":
        out = out - state.alpha * np.asarray(gamma)
    return out


def mh_update_phi(state: ChainState, data: RankData, cfg: ChainConfig,
                  rng: np.random.Generator) -> ChainState:
    prop = state.phi + cfg.sigma_phi * rng.standard_normal()
    log_u = np.log(rng.random())
    state.proposed["phi"] += 1
    if not 0.0 <= prop <= cfg.b:
        return state
    delta = _phi_log_conditional(prop, state, data) - _phi_log_conditional(state.phi, state, data)
    if log_u < delta:
        state.phi = float(prop)
        state.accepted["phi"] += 1
        _refresh(state, data, cfg)
    return state


def _gamma_upper(state, cfg):
    return np.inf if state.mode == "pama-h" else cfg.b


def mh_update_gamma(state: ChainState, k: int, data: RankData, cfg: ChainConfig,
                    rng: np.random.Generator) -> ChainState:
    """Random-walk update of a single ``gamma_k``; depends only on list ``k``."""
    prop = state.gamma[k] + cfg.sigma_gamma * rng.standard_normal()
    log_u = np.log(rng.random())
    state.proposed["gamma"] += 1
    if not 0.0 <= prop <= _gamma_upper(state, cfg):
        return state
    trial = state.gamma.copy()
    trial[k] = prop
    delta = _gamma_log_conditional(trial, state, data)[k] - _gamma_log_conditional(
        state.gamma, state, data)[k]
    if log_u < delta:
        state.gamma = trial
        state.accepted["gamma"] += 1
        _refresh(state, data, cfg)
    return state


def mh_update_gammas(state: ChainState, data: RankData, cfg: ChainConfig,
                     rng: np.random.Generator) -> ChainState:
    """Update every ``gamma_k`` at once.

    The ``gamma_k`` are conditionally independent given the indicator and
    ``phi``, so simultaneous per-coordinate Metropolis steps are equivalent to
    a systematic scan.
    """
    m = state.gamma.size
    prop = state.gamma + cfg.sigma_gamma * rng.standard_normal(m)
    log_u = np.log(rng.random(m))
    state.proposed["gamma"] += m
    inside = (prop >= 0.0) & (prop <= _gamma_upper(state, cfg))
    safe = np.where(inside, prop, state.gamma)
    delta = _gamma_log_conditional(safe, state, data) - _gamma_log_conditional(
        state.gamma, state, data)
    accept = inside & (log_u < delta)
    if accept.any():
        state.gamma = np.where(accept, prop, state.gamma)
        state.accepted["gamma"] += int(accept.sum())
        _refresh(state, data, cfg)
    return state


def n_indicator_moves(n: int, n1: int) -> int:
    """Size of the indicator proposal set: adjacent swaps plus boundary exchanges."""
    return (n1 - 1) + (n - n1)


def mh_update_indicator(state: ChainState, data: RankData, cfg: ChainConfig,
                        rng: np.random.Generator, n_proposals: int | None = None) -> ChainState:
    """Metropolis updates of the indicator.

    Each proposal picks uniformly among swapping two adjacent relevant
    entities and exchanging the last relevant entity with a background one.
    Both move types are involutions, so the proposal is symmetric.
    """
    n_moves = n_indicator_moves(data.n, state.n1)
    if n_proposals is None:
        n_proposals = cfg.indicator_moves if cfg.indicator_moves is not None else data.n
    if n_moves == 0 or n_proposals == 0:
        return state
    moves = rng.integers(0, n_moves, size=n_proposals).astype(np.int64)
    log_u = np.log(rng.random(n_proposals))
    acc = _kernels.indicator_mh(
        data.P, data.O, state.ind, state.rel, state.bg, state.d, state.logB, state.logA,
        state.gamma, state.phi, np.ones(data.m), _xpsi(state, data), moves, log_u,
        data.logt, data.lfact,
    )
    state.proposed["indicator"] += n_proposals
    state.accepted["indicator"] += int(acc)
    if acc:
        _refresh(state, data, cfg)
    return state


def mh_update_psi(state: ChainState, data: RankData, cfg: ChainConfig,
                  rng: np.random.Generator) -> ChainState:
    """Coordinate-wise random-walk updates of the logistic coefficients."""
    p = state.psi.size
    steps = cfg.sigma_psi * rng.standard_normal(p)
    log_u = np.log(rng.random(p))
    cov_lp = covariate_log_prior(state.ind, CovariateModel(data.X, state.psi))
    changed = False
    for l in range(p):
        state.proposed["psi"] += 1
        prop = state.psi.copy()
        prop[l] += steps[l]
        if abs(prop[l]) > cfg.psi_bound:
            continue
        new_lp = covariate_log_prior(state.ind, CovariateModel(data.X, prop))
        if log_u[l] < new_lp - cov_lp:
            state.psi = prop
            cov_lp = new_lp
            state.accepted["psi"] += 1
            changed = True
    if changed:
        _refresh(state, data, cfg)
    return state


def gibbs_update_alpha(state: ChainState, cfg: ChainConfig, rng: np.random.Generator,
                       data: RankData | None = None) -> ChainState:
    """Exact draw of the exponential rate from its Gamma full conditional."""
    a0, b0 = cfg.alpha_prior
    shape = a0 + state.gamma.size
    rate = b0 + float(state.gamma.sum())
    state.alpha = float(rng.gamma(shape, 1.0 / rate))
    state.proposed["alpha"] += 1
    state.accepted["alpha"] += 1
    if data is not None:
        _refresh(state, data, cfg)
    return state


def sweep(state: ChainState, data: RankData, cfg: ChainConfig,
          rng: np.random.Generator) -> ChainState:
    """One systematic scan: indicator, phi, gammas, then psi or alpha."""
    mh_update_indicator(state, data, cfg, rng)
    mh_update_phi(state, data, cfg, rng)
    mh_update_gammas(state, data, cfg, rng)
    if state.mode == "covariate":
        mh_update_psi(state, data, cfg, rng)
    elif state.mode == "pama-h":
        gibbs_update_alpha(state, cfg, rng, data)
    return state


def initial_state(data: RankData, n1: int, mode: str, rng: np.random.Generator,
                  cfg: ChainConfig | None = None, ind=None) -> ChainState:
    """Moment-estimator indicator, ``phi`` and ``gamma`` uniform on (0, 1]."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    if mode == "covariate" and data.X is None:
        raise ConfigError("covariate mode needs a covariate matrix")
    if not 1 <= n1 <= data.n:
        raise ConfigError(f"n1 must lie in 1..{data.n}")
    if ind is None:
        ind = moment_estimator(data.P, n1)
    phi = 1.0 - rng.random()
    gamma = 1.0 - rng.random(data.m)
    state = ChainState(
        ind=np.asarray(ind),
        phi=float(phi),
        gamma=gamma,
        mode=mode,
        psi=np.zeros(data.X.shape[1]) if mode == "covariate" else None,
        alpha=1.0 if mode == "pama-h" else None,
    )
    attach(state, data)
    state.log_post = log_posterior(state, data, cfg)
    return state


@dataclass
class ChainResult:
    """Thinned post-burn-in draws and the full per-sweep log-posterior trace."""

    labels: np.ndarray
    phi: np.ndarray
    gamma: np.ndarray
    log_post: np.ndarray
    trace: np.ndarray
    iterations: np.ndarray
    acceptance_rates: dict
    n1: int
    mode: str
    psi: np.ndarray | None = None
    alpha: np.ndarray | None = None
    final_state: ChainState | None = None
    completions: np.ndarray | None = None

    def __len__(self):
        return self.labels.shape[0]


def run_chain(data: RankData, n1: int, cfg: ChainConfig | None = None, mode: str = "pama",
              rng: np.random.Generator | None = None, init: ChainState | None = None,
              before_sweep=None) -> ChainResult:
    """Run the sampler and keep every ``thin``-th state after ``burn_in``.

    ``before_sweep(state, rng)``, if given, is called at the start of every
    sweep; the partial-list sampler uses it to refresh imputed lists.
    """
    cfg = (cfg or ChainConfig()).validate()
    if data.m == 0:
        raise ConfigError("no ranking lists supplied")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    state = init if init is not None else initial_state(data, n1, mode, rng, cfg)
    S = cfg.kept
    labels = np.empty((S, data.n), dtype=np.int64)
    phi = np.empty(S)
    gamma = np.empty((S, data.m))
    log_post = np.empty(S)
    psi = np.empty((S, state.psi.size)) if state.mode == "covariate" else None
    alpha = np.empty(S) if state.mode == "pama-h" else None
    trace = np.empty(cfg.iterations)
    kept_at = np.empty(S, dtype=np.int64)
    s = 0
    for t in range(cfg.iterations):
        if before_sweep is not None:
            before_sweep(state, rng)
        sweep(state, data, cfg, rng)
        trace[t] = state.log_post
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thin == 0:
            labels[s] = state.ind
            phi[s] = state.phi
            gamma[s] = state.gamma
            log_post[s] = state.log_post
            kept_at[s] = t
            if psi is not None:
                psi[s] = state.psi
            if alpha is not None:
                alpha[s] = state.alpha
            s += 1
    logger.debug("chain finished: acceptance %s", state.acceptance_rates())
    return ChainResult(
        labels=labels, phi=phi, gamma=gamma, log_post=log_post, trace=trace,
        iterations=kept_at, acceptance_rates=state.acceptance_rates(), n1=state.n1,
        mode=state.mode, psi=psi, alpha=alpha, final_state=state,
    )


@dataclass
class PosteriorSummary:
    i_bar: np.ndarray
    phi_bar: float
    gamma_bar: np.ndarray
    n1: int
    psi_pos_prob: np.ndarray | None = None
    psi_bar: np.ndarray | None = None
    alpha_bar: float | None = None
    acceptance_rates: dict = field(default_factory=dict)


def background_rank(n: int, n1: int) -> float:
    """Average position of a background entity."""
    return (n1 + 1 + n) / 2.0


def posterior_summary(samples: ChainResult) -> PosteriorSummary:
    if len(samples) == 0:
        raise ValueError("cannot summarise an empty sample set")
    labels = samples.labels
    n = labels.shape[1]
    filled = np.where(labels > 0, labels, background_rank(n, samples.n1))
    return PosteriorSummary(
        i_bar=filled.mean(axis=0),
        phi_bar=float(samples.phi.mean()),
        gamma_bar=samples.gamma.mean(axis=0),
        n1=samples.n1,
        psi_pos_prob=None if samples.psi is None else (samples.psi > 0).mean(axis=0),
        psi_bar=None if samples.psi is None else samples.psi.mean(axis=0),
        alpha_bar=None if samples.alpha is None else float(samples.alpha.mean()),
        acceptance_rates=dict(samples.acceptance_rates),
    )


def aggregate(summary: PosteriorSummary) -> np.ndarray:
    """Aggregated ranking: entities sorted by posterior mean label, ties by index."""
    i_bar = np.asarray(summary.i_bar)
    order = np.lexsort((np.arange(i_bar.size), i_bar))
    tau = np.empty(i_bar.size, dtype=np.int64)
    tau[order] = np.arange(1, i_bar.size + 1)
    return tau
