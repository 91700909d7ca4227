"""Maximum-likelihood fitting by Gauss-Seidel coordinate ascent.

Each cycle updates every ``gamma_k`` by safeguarded Newton steps, then ``phi``,
then the indicator by first-improvement hill climbing, then (covariate mode)
the logistic coefficients. Every sub-step is monotone, so the recorded
log-likelihood never decreases.

The optimizer works on a generic weighted list set: list ``l`` belongs to
ranker ``owner[l]`` and carries weight ``w[l]``. Plain fitting uses one list
per ranker with unit weight; Monte Carlo EM stacks imputed completions with
weights ``1 / M``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import _kernels
from .bayes import ConfigError, background_rank
from .data import RankData
from .model import (
    PamaParams,
    dlog_power_law_norm,
    dlog_z_mallows,
    log_power_law_norm,
    log_z_mallows,
)
from .moment import moment_estimator
from .rankings import as_indicator, indicator_from_order, relevant_order

logger = logging.getLogger(__name__)

_UNIDENTIFIED_TOL = 1e-6


@dataclass
class MleConfig:
    max_cycles: int = 200
    tol: float = 0.1
    alpha_gamma: float = 1.0
    alpha_phi: float = 1.0
    newton_iters: int = 5
    bound: float = 10.0
    psi_bound: float = 20.0
    max_passes: int = 10_000
    restarts: int = 1
    polish_max_moves: int = 40
    # MCEM
    mcem_samples: int = 200
    mcem_growth: float = 1.5
    mcem_max_samples: int = 2_000
    mcem_max_iter: int = 50
    mcem_sigma: float = 0.3
    mcem_burn: int = 50
    seed: int | None = None

    def validate(self) -> "MleConfig":
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if not (0 < self.alpha_gamma <= 1 and 0 < self.alpha_phi <= 1):
            raise ConfigError("Newton step lengths must lie in (0, 1]")
        if self.max_cycles < 1 or self.newton_iters < 1 or self.restarts < 1:
            raise ConfigError("max_cycles, newton_iters and restarts must be at least 1")
        if self.bound <= 0 or self.psi_bound <= 0:
            raise ConfigError("parameter bounds must be positive")
        if self.mcem_samples < 1 or self.mcem_growth < 1 or self.mcem_max_iter < 1:
            raise ConfigError("invalid MCEM settings")
        return self


@dataclass
class MleResult:
    params: PamaParams
    log_lik: float
    converged: bool
    cycles_used: int
    trace: np.ndarray
    psi: np.ndarray | None = None
    alpha: float | None = None
    unidentified: bool = False
    mode: str = "pama"
    samples_used: list = field(default_factory=list)

    @property
    def n1(self) -> int:
        return self.params.n1


# ---------------------------------------------------------------- objectives

def gamma_objective(gamma, phi, W, SB, SD, n0, n1):
    """Ranker-``k`` log-likelihood in ``gamma`` and its first two derivatives.

    ``W``, ``SB`` and ``SD`` are the weighted count, log B sum and distance
    sum of the ranker's lists. Constant terms are dropped.
    """
    gamma = np.asarray(gamma, dtype=float)
    theta = phi * gamma
    lc = log_power_law_norm(gamma, n1)
    c1, c2 = dlog_power_law_norm(gamma, n1)
    lz = log_z_mallows(n1, theta)
    z1, z2 = dlog_z_mallows(n1, theta)
    g = -gamma * SB - W * n0 * lc - theta * SD - W * lz
    g1 = -SB - W * n0 * c1 - phi * SD - W * phi * z1
    g2 = -W * n0 * c2 - W * phi**2 * z2
    return g, g1, g2


def phi_objective(phi, gam, SD, W, n1):
    """Log-likelihood in ``phi`` and its derivatives.

    ``gam``, ``SD`` and ``W`` are aligned arrays, one entry per (weighted)
    unit carrying its own quality value.
    """
    gam = np.asarray(gam, dtype=float)
    theta = phi * gam
    lz = log_z_mallows(n1, theta)
    z1, z2 = dlog_z_mallows(n1, theta)
    g = float(np.sum(-theta * SD - W * lz))
    g1 = float(np.sum(-gam * SD - W * gam * z1))
    g2 = float(np.sum(-W * gam**2 * z2))
    return g, g1, g2


def _safeguarded_newton(f, x, lo, hi, step, iters):
    """Maximize a concave scalar function ``f -> (value, d1, d2)`` on [lo, hi]."""
    fx, g1, g2 = f(x)
    for _ in range(iters):
        if g1 == 0.0 or (x <= lo and g1 < 0) or (x >= hi and g1 > 0):
            break
        cand = None
        if g2 < 0:
            # damped Newton with step halving
            target = float(np.clip(x - step * g1 / g2, lo, hi))
            for _ in range(8):
                cand = target
                fc = f(cand)
                if fc[0] > fx:
                    break
                target = 0.5 * (x + target)
                cand = None
            if cand is None:
                # concave and no halved step helps: at the optimum up to round-off
                break
        if cand is None:
            a, b = (x, hi) if g1 > 0 else (lo, x)
            res = minimize_scalar(lambda v: -f(v)[0], bounds=(a, b), method="bounded",
                                  options={"xatol": 1e-10})
            if not -res.fun > fx:
                break
            cand = float(res.x)
            fc = f(cand)
        moved = abs(cand - x)
        x = cand
        fx, g1, g2 = fc
        if moved < 1e-12:
            break
    return x


# ---------------------------------------------------------------- workspace

class _Problem:
    """Weighted list set plus current parameters and cached statistics."""

    def __init__(self, data: RankData, n1: int, owner=None, w=None, m=None):
        self.data = data
        self.n1 = int(n1)
        self.n0 = data.n - self.n1
        L = data.m
        self.owner = np.arange(L) if owner is None else np.asarray(owner, dtype=np.int64)
        self.w = np.ones(L) if w is None else np.asarray(w, dtype=float)
        self.m = int(self.owner.max()) + 1 if m is None else int(m)

    def attach(self, ind, phi, gamma, psi=None):
        self.ind = np.ascontiguousarray(as_indicator(ind), dtype=np.int64)
        if np.count_nonzero(self.ind) != self.n1:
            raise ValueError("indicator has the wrong number of relevant entities")
        self.rel = relevant_order(self.ind).astype(np.int64)
        self.bg = np.flatnonzero(self.ind == 0).astype(np.int64)
        self.phi = float(phi)
        self.gamma = np.asarray(gamma, dtype=float).copy()
        self.psi = None if psi is None else np.asarray(psi, dtype=float).copy()
        self.refresh_stats()

    def refresh_stats(self):
        self.d, self.logB, self.logA = self.data.stats(self.ind)

    def ranker_sums(self):
        W = np.bincount(self.owner, weights=self.w, minlength=self.m)
        SB = np.bincount(self.owner, weights=self.w * self.logB, minlength=self.m)
        SD = np.bincount(self.owner, weights=self.w * self.d, minlength=self.m)
        return W, SB, SD

    def xpsi(self):
        if self.psi is None:
            return np.zeros(self.data.n)
        return np.ascontiguousarray(self.data.X @ self.psi)

    def log_lik(self) -> float:
        gl = self.gamma[self.owner]
        theta = self.phi * gl
        ll = (
            -self.logA - gl * self.logB - self.n0 * log_power_law_norm(gl, self.n1)
            - theta * self.d - log_z_mallows(self.n1, theta)
        )
        out = float(np.sum(self.w * ll))
        if self.psi is not None:
            out += _logistic_ll(self.psi, self.data.X, self.ind)
        return out


def _logistic_ll(psi, X, ind) -> float:
    eta = X @ psi
    return float(np.sum((ind > 0) * eta - np.logaddexp(0.0, eta)))


def _update_gammas(pb: _Problem, cfg: MleConfig):
    W, SB, SD = pb.ranker_sums()
    for k in range(pb.m):
        if W[k] == 0:
            continue
        f = lambda g, k=k: tuple(
            float(v) for v in gamma_objective(g, pb.phi, W[k], SB[k], SD[k], pb.n0, pb.n1))
        pb.gamma[k] = _safeguarded_newton(f, pb.gamma[k], 0.0, cfg.bound,
                                          cfg.alpha_gamma, cfg.newton_iters)


def _update_phi(pb: _Problem, cfg: MleConfig, gam=None, SD=None, W=None):
    if gam is None:
        W, _, SD = pb.ranker_sums()
        gam = pb.gamma
    if not np.any(gam > 0):
        return
    f = lambda p: phi_objective(p, gam, SD, W, pb.n1)
    pb.phi = _safeguarded_newton(f, pb.phi, 0.0, cfg.bound, cfg.alpha_phi, cfg.newton_iters)


def _update_indicator(pb: _Problem, cfg: MleConfig, gl=None) -> int:
    gl = pb.gamma[pb.owner] if gl is None else gl
    d = pb.d.copy()
    applied = _kernels.indicator_ascent(
        pb.data.P, pb.data.O, pb.ind, pb.rel, pb.bg, d, pb.logB, pb.logA,
        np.ascontiguousarray(gl, dtype=float), pb.phi, pb.w, pb.xpsi(),
        pb.data.logt, pb.data.lfact, cfg.max_passes,
    )
    pb.d = d
    return int(applied)


def _update_psi(pb: _Problem, cfg: MleConfig):
    X = pb.data.X
    y = (pb.ind > 0).astype(float)

    def nll(psi):
        eta = X @ psi
        p = 1.0 / (1.0 + np.exp(-eta))
        return -float(np.sum(y * eta - np.logaddexp(0.0, eta))), -(X.T @ (y - p))

    res = minimize(nll, pb.psi, jac=True, method="L-BFGS-B",
                   bounds=[(-cfg.psi_bound, cfg.psi_bound)] * X.shape[1])
    if res.fun < nll(pb.psi)[0]:
        pb.psi = np.asarray(res.x, dtype=float)


def _cycle(pb: _Problem, cfg: MleConfig, mode: str):
    _update_gammas(pb, cfg)
    _update_phi(pb, cfg)
    _update_indicator(pb, cfg)
    if mode == "covariate":
        _update_psi(pb, cfg)


def _gauss_seidel(pb: _Problem, cfg: MleConfig, mode: str):
    trace = [pb.log_lik()]
    converged = False
    cycles = 0
    for cycles in range(1, cfg.max_cycles + 1):
        _cycle(pb, cfg, mode)
        trace.append(pb.log_lik())
        if trace[-1] - trace[-2] < cfg.tol:
            converged = True
            break
    if not converged:
        logger.warning("coordinate ascent stopped after %d cycles without converging", cycles)
    return np.asarray(trace), converged, cycles


def _fit_scalars(pb: _Problem, cfg: MleConfig) -> float:
    """Joint bounded quasi-Newton fit of ``phi`` and ``gamma`` at a fixed indicator.

    Only accepted when it improves on the starting values, so the result
    never falls below the current log-likelihood.
    """
    W, SB, SD = pb.ranker_sums()
    live = W > 0

    def nll(x):
        phi, g = x[0], x[1:]
        val, d_g, _ = gamma_objective(g, phi, W, SB, SD, pb.n0, pb.n1)
        z1, _ = dlog_z_mallows(pb.n1, phi * g)
        d_phi = float(np.sum(-g * SD - W * g * z1))
        return -float(np.sum(val[live])), -np.r_[d_phi, np.where(live, d_g, 0.0)]

    x0 = np.r_[pb.phi, pb.gamma]
    res = minimize(nll, x0, jac=True, method="L-BFGS-B",
                   bounds=[(0.0, cfg.bound)] * x0.size)
    before = pb.log_lik()
    if res.fun < nll(x0)[0]:
        old_phi, old_gamma = pb.phi, pb.gamma.copy()
        pb.phi, pb.gamma = float(res.x[0]), np.asarray(res.x[1:], dtype=float)
        after = pb.log_lik()
        if after > before:
            return after
        pb.phi, pb.gamma = old_phi, old_gamma
    return before


def _neighbours(ind):
    """Adjacent swaps inside the relevant order and relevant/background replacements."""
    rel = relevant_order(ind)
    bg = np.flatnonzero(ind == 0)
    for a, b in zip(rel[:-1], rel[1:]):
        out = ind.copy()
        out[a], out[b] = out[b], out[a]
        yield out
    for r in rel:
        for z in bg:
            out = ind.copy()
            out[z], out[r] = out[r], 0
            yield out


def _polish(pb: _Problem, cfg: MleConfig, trace: list):
    """Best-improvement search over indicator moves with re-fitted scalars.

    Coordinate ascent can stall where no single move helps at the current
    scalars (for instance once phi reaches 0 and the relevant order no longer
    matters); scoring moves by the profile likelihood escapes those ridges.
    """
    n0 = pb.n0
    if (pb.n1 - 1) + pb.n1 * n0 > cfg.polish_max_moves:
        return
    cur = _fit_scalars(pb, cfg)
    trace.append(cur)
    while True:
        best = None
        for cand in _neighbours(pb.ind):
            for phi0, g0 in ((pb.phi, pb.gamma), (1.0, np.ones(pb.m))):
                trial = _Problem(pb.data, pb.n1, owner=pb.owner, w=pb.w, m=pb.m)
                trial.attach(cand, phi0, g0)
                val = _fit_scalars(trial, cfg)
                if val > cur + 1e-9 and (best is None or val > best[0]):
                    best = (val, trial)
        if best is None:
            return
        cur, trial = best
        pb.attach(trial.ind, trial.phi, trial.gamma)
        trace.append(cur)


def _initial(data: RankData, n1: int, rng, m: int, mode: str):
    ind = moment_estimator(data.P, n1)
    phi = 1.0 - rng.random()
    gamma = 1.0 - rng.random(m)
    psi = np.zeros(data.X.shape[1]) if mode == "covariate" else None
    return ind, phi, gamma, psi


def _check(data: RankData, n1: int, mode: str, modes=("pama", "covariate")):
    if mode not in modes:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {modes}")
    if data.m == 0:
        raise ConfigError("no ranking lists supplied")
    if not 1 <= n1 <= data.n:
        raise ConfigError(f"n1 must lie in 1..{data.n}")
    if mode == "covariate" and data.X is None:
        raise ConfigError("covariate mode needs a covariate matrix")


def _result(pb: _Problem, trace, converged, cycles, mode, alpha=None) -> MleResult:
    return MleResult(
        params=PamaParams(pb.ind.copy(), pb.phi, pb.gamma.copy()),
        log_lik=float(trace[-1]),
        converged=converged,
        cycles_used=cycles,
        trace=np.asarray(trace),
        psi=None if pb.psi is None else pb.psi.copy(),
        alpha=alpha,
        unidentified=bool(np.all(pb.gamma < _UNIDENTIFIED_TOL)),
        mode=mode,
    )


def fit_mle(data: RankData, n1: int, cfg: MleConfig | None = None, mode: str = "pama",
            rng: np.random.Generator | None = None, init: PamaParams | None = None,
            psi_init=None) -> MleResult:
    """Coordinate-ascent MLE of ``(ind, phi, gamma)`` and, optionally, ``psi``."""
    cfg = (cfg or MleConfig()).validate()
    _check(data, n1, mode)
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    ind, phi, gamma, psi = _initial(data, n1, rng, data.m, mode)
    if init is not None:
        ind, phi, gamma = init.ind, init.phi, init.gamma
    if psi_init is not None:
        psi = np.asarray(psi_init, dtype=float)
    best = None
    for start in range(cfg.restarts):
        if start:
            # later starts: random indicator, fresh scalars
            ind = indicator_from_order(rng.permutation(data.n)[:n1], data.n)
            phi, gamma = 1.0 - rng.random(), 1.0 - rng.random(data.m)
        pb = _Problem(data, n1)
        pb.attach(ind, phi, gamma, psi)
        trace, converged, cycles = _gauss_seidel(pb, cfg, mode)
        if mode == "pama":
            trace = list(trace)
            _polish(pb, cfg, trace)
            trace = np.asarray(trace)
        res = _result(pb, trace, converged, cycles, mode)
        if best is None or res.log_lik > best.log_lik:
            best = res
    return best


def fit_weighted(data: RankData, n1: int, owner, w, m: int, cfg: MleConfig,
                 ind, phi, gamma, mode: str = "pama", psi=None):
    """Coordinate ascent on a weighted, owner-mapped list set (MCEM M-step)."""
    pb = _Problem(data, n1, owner=owner, w=w, m=m)
    pb.attach(ind, phi, gamma, psi)
    trace, converged, cycles = _gauss_seidel(pb, cfg, mode)
    if mode == "pama":
        trace = list(trace)
        _polish(pb, cfg, trace)
        trace = np.asarray(trace)
    return pb, trace, converged, cycles


# ---------------------------------------------------------------- single steps

def _problem_for(params: PamaParams, data: RankData) -> _Problem:
    pb = _Problem(data, params.n1)
    pb.attach(params.ind, params.phi, params.gamma)
    return pb


def newton_step_gamma(params: PamaParams, k: int, data: RankData,
                      cfg: MleConfig | None = None) -> float:
    """Safeguarded Newton update of ``gamma_k`` with the rest held fixed."""
    cfg = (cfg or MleConfig()).validate()
    pb = _problem_for(params, data)
    W, SB, SD = pb.ranker_sums()
    f = lambda g: tuple(float(v) for v in gamma_objective(g, pb.phi, W[k], SB[k], SD[k],
                                                          pb.n0, pb.n1))
    return _safeguarded_newton(f, float(params.gamma[k]), 0.0, cfg.bound,
                               cfg.alpha_gamma, cfg.newton_iters)


def newton_step_phi(params: PamaParams, data: RankData, cfg: MleConfig | None = None) -> float:
    cfg = (cfg or MleConfig()).validate()
    pb = _problem_for(params, data)
    _update_phi(pb, cfg)
    return pb.phi


def ascent_search_indicator(params: PamaParams, data: RankData,
                            cfg: MleConfig | None = None) -> np.ndarray:
    """First-improvement hill climbing over adjacent and boundary swaps."""
    cfg = (cfg or MleConfig()).validate()
    pb = _problem_for(params, data)
    _update_indicator(pb, cfg)
    return pb.ind.copy()


def aggregate_mle(result: MleResult) -> np.ndarray:
    """Ranks with the background tied at the mean of positions ``n1+1 .. n``."""
    ind = np.asarray(result.params.ind)
    n, n1 = ind.size, result.n1
    return np.where(ind > 0, ind, background_rank(n, n1)).astype(float)


# ---------------------------------------------------------------- PAMA-H MCEM

def _sample_gamma_conditional(pb: _Problem, alpha, start, M, cfg: MleConfig, rng):
    """Random-walk draws of each ``gamma_k`` under the exponential prior.

    Returns an ``(M, m)`` array; the chains are run for ``mcem_burn`` steps
    before the first kept draw.
    """
    W, SB, SD = pb.ranker_sums()
    g = start.copy()

    def logf(x):
        return gamma_objective(x, pb.phi, W, SB, SD, pb.n0, pb.n1)[0] - alpha * x

    cur = logf(g)
    out = np.empty((M, pb.m))
    for t in range(cfg.mcem_burn + M):
        prop = g + cfg.mcem_sigma * rng.standard_normal(pb.m)
        log_u = np.log(rng.random(pb.m))
        ok = prop >= 0
        new = logf(np.where(ok, prop, g))
        acc = ok & (log_u < new - cur)
        g = np.where(acc, prop, g)
        cur = np.where(acc, new, cur)
        if t >= cfg.mcem_burn:
            out[t - cfg.mcem_burn] = g
    return out


def _q_hat(pb: _Problem, samples, alpha):
    """Monte Carlo Q-function and its standard error."""
    W, SB, SD = pb.ranker_sums()
    vals = gamma_objective(samples, pb.phi, W, SB, SD, pb.n0, pb.n1)[0]
    vals = vals - np.sum(W * pb.logA) / pb.m + np.log(alpha) - alpha * samples
    per_draw = vals.sum(axis=1)
    se = per_draw.std(ddof=1) / np.sqrt(per_draw.size) if per_draw.size > 1 else 0.0
    return float(per_draw.mean()), float(se)


def mcem_fit_pama_h(data: RankData, n1: int, cfg: MleConfig | None = None,
                    rng: np.random.Generator | None = None) -> MleResult:
    """Monte Carlo EM for the exponential-prior model.

    The E-step samples the latent ``gamma_k``; the M-step sets
    ``alpha = 1 / mean(gamma)`` and runs coordinate ascent over ``phi`` and
    the indicator on the sampled values. The returned ``gamma`` is the
    posterior mean of the last E-step.
    """
    cfg = (cfg or MleConfig()).validate()
    _check(data, n1, "pama", modes=("pama",))
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    ind, phi, gamma, _ = _initial(data, n1, rng, data.m, "pama")
    pb = _Problem(data, n1)
    pb.attach(ind, phi, gamma)
    alpha = 1.0 / max(float(gamma.mean()), 1e-12)
    M = cfg.mcem_samples
    trace, sizes = [], []
    converged = False
    start = pb.gamma.copy()
    it = 0
    for it in range(1, cfg.mcem_max_iter + 1):
        samples = _sample_gamma_conditional(pb, alpha, start, M, cfg, rng)
        start = samples[-1].copy()
        q_old, se = _q_hat(pb, samples, alpha)
        # M-step
        alpha = 1.0 / max(float(samples.mean()), 1e-12)
        flat = samples.ravel()
        for _ in range(cfg.max_cycles):
            before = _q_hat(pb, samples, alpha)[0]
            _, _, SD = pb.ranker_sums()
            _update_phi(pb, cfg, gam=flat, SD=np.tile(SD, M) / M, W=np.full(flat.size, 1.0 / M))
            _update_indicator(pb, cfg, gl=samples.mean(axis=0)[pb.owner])
            if _q_hat(pb, samples, alpha)[0] - before < cfg.tol:
                break
        pb.gamma = samples.mean(axis=0)
        q_new, _ = _q_hat(pb, samples, alpha)
        trace.append(q_new)
        sizes.append(M)
        gain = q_new - q_old
        if gain < 3 * se and M < cfg.mcem_max_samples:
            M = min(int(np.ceil(M * cfg.mcem_growth)), cfg.mcem_max_samples)
        # M-step gain on a fixed sample set is nonnegative by construction
        if gain < cfg.tol:
            converged = True
            break
    pb_ll = pb.log_lik()
    res = _result(pb, np.asarray(trace), converged, it, "pama-h", alpha=alpha)
    res.log_lik = pb_ll
    res.samples_used = sizes
    return res


def alpha_mle(gamma_samples) -> float:
    """Exponential-rate MLE from sampled qualities."""
    g = np.asarray(gamma_samples, dtype=float)
    return 1.0 / float(g.mean())
