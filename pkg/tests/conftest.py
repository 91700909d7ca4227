"""Independent brute-force oracles shared by the test modules.

Nothing here calls into the package's likelihood code: probabilities are
built from first principles by enumerating permutations.
"""
from itertools import permutations
from math import factorial, lgamma

import numpy as np
import pytest


def perms(n):
    """Every ranking of n entities as a tuple of 1-based positions."""
    for p in permutations(range(1, n + 1)):
        yield p


def discordant(a, b):
    n = len(a)
    return sum(
        1 for i in range(n) for j in range(i + 1, n) if (a[i] - a[j]) * (b[i] - b[j]) < 0
    )


def oracle_stats(tau, ind):
    """Kendall distance of the relevant order, background slots, tie multiplicity."""
    n = len(tau)
    rel = [i for i in range(n) if ind[i] > 0]
    bg = [i for i in range(n) if ind[i] == 0]
    n1 = len(rel)
    rel_by_label = sorted(rel, key=lambda i: ind[i])
    obs = [sorted(tau[j] for j in rel).index(tau[i]) + 1 for i in rel_by_label]
    d = discordant(obs, list(range(1, n1 + 1)))
    # slot of each background entity: n1 + 2 minus its rank among itself + relevant
    slots = [n1 + 2 - (1 + sum(1 for j in rel if tau[j] < tau[i])) for i in bg]
    ways = 1
    for s in set(slots):
        ways *= factorial(slots.count(s))
    return d, slots, ways


def oracle_prob(tau, ind, phi, gamma):
    """Partition-Mallows probability of one ranking, computed from scratch.

    Relevant order follows a Mallows law with dispersion phi*gamma around the
    indicator order; each background entity picks the slot it is inserted
    before with probability proportional to slot**(-gamma) among n1+1 slots;
    background entities sharing a slot are ordered uniformly.
    """
    n1 = int(sum(1 for v in ind if v > 0))
    d, slots, ways = oracle_stats(tau, ind)
    theta = phi * gamma
    ident = list(range(1, n1 + 1))
    z = sum(np.exp(-theta * discordant(p, ident)) for p in perms(n1))
    w = np.arange(1, n1 + 2, dtype=float) ** (-gamma)
    w /= w.sum()
    p_bg = np.prod([w[s - 1] for s in slots]) if slots else 1.0
    return np.exp(-theta * d) / z * p_bg / ways


def oracle_law(ind, phi, gamma):
    n = len(ind)
    return {t: oracle_prob(t, ind, phi, gamma) for t in perms(n)}


def all_indicators(n, n1):
    """Every enhanced indicator with n1 relevant entities."""
    for chosen in permutations(range(n), n1):
        ind = np.zeros(n, dtype=np.int64)
        for r, e in enumerate(chosen, start=1):
            ind[e] = r
        yield ind


def tv(emp_counts, exact):
    total = sum(emp_counts.values())
    keys = set(exact) | set(emp_counts)
    return 0.5 * sum(abs(emp_counts.get(k, 0) / total - exact.get(k, 0.0)) for k in keys)


def log_factorial(n):
    return lgamma(n + 1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def grid_posterior(P, n1, b, grid=400):
    """Posterior over indicators and the marginal density of phi.

    Uniform priors on the indicator, on phi in [0, b] and on each gamma_k in
    [0, b]; the continuous parameters are integrated out by the midpoint
    rule. Returns ``(post, phi_grid, phi_density)`` with ``post`` keyed by
    the indicator tuple.
    """
    n = P.shape[1]
    h = b / grid
    x = (np.arange(grid) + 0.5) * h
    phi, gam = x[:, None], x[None, :]
    theta = phi * gam
    ident = list(range(1, n1 + 1))
    dist = np.array([discordant(p, ident) for p in perms(n1)])
    log_z = np.logaddexp.reduce(-theta[..., None] * dist, axis=-1)
    log_c = np.logaddexp.reduce(-np.log(np.arange(1, n1 + 2))[:, None] * x[None, :], axis=0)
    n0 = n - n1
    log_marg, log_phi = {}, []
    for ind in all_indicators(n, n1):
        total = np.zeros(grid)
        for tau in P:
            d, slots, ways = oracle_stats(tuple(tau), ind)
            ll = (-theta * d - log_z - gam * np.log(slots).sum() - n0 * log_c[None, :]
                  - np.log(ways))
            total += np.logaddexp.reduce(ll, axis=1) + np.log(h)
        key = tuple(int(v) for v in ind)
        log_marg[key] = np.logaddexp.reduce(total) + np.log(h)
        log_phi.append(total)
    norm = np.logaddexp.reduce(list(log_marg.values()))
    post = {k: float(np.exp(v - norm)) for k, v in log_marg.items()}
    dens = np.exp(np.logaddexp.reduce(np.array(log_phi), axis=0) - norm)
    return post, x, dens


def oracle_log_lik(P, ind, phi, gamma):
    return float(sum(np.log(oracle_prob(tuple(t), ind, phi, g)) for t, g in zip(P, gamma)))


def profile_argmax(P, n1, bound=10.0):
    """Indicator maximizing the likelihood profiled over phi and gamma.

    The inner maximization uses multi-start L-BFGS-B on the oracle
    likelihood. Returns ``(best_indicator, {indicator: profile value})``.
    """
    from scipy.optimize import minimize

    n = P.shape[1]
    m = P.shape[0]
    n0 = n - n1
    ident = list(range(1, n1 + 1))
    dist = np.array([discordant(p, ident) for p in perms(n1)])
    logs = np.log(np.arange(1, n1 + 2))
    prof = {}
    for ind in all_indicators(n, n1):
        st = [oracle_stats(tuple(t), ind) for t in P]
        d = np.array([s[0] for s in st], dtype=float)
        sb = np.array([np.log(s[1]).sum() if s[1] else 0.0 for s in st])
        lw = np.log([s[2] for s in st])

        def nll(x):
            phi, g = x[0], x[1:]
            th = phi * g
            lz = np.logaddexp.reduce(-th[:, None] * dist[None, :], axis=1)
            lc = np.logaddexp.reduce(-g[:, None] * logs[None, :], axis=1)
            return -float(np.sum(-th * d - lz - g * sb - n0 * lc - lw))

        best = np.inf
        for start in (0.5, 1.0, 3.0):
            r = minimize(nll, np.full(m + 1, start), method="L-BFGS-B",
                         bounds=[(0, bound)] * (m + 1))
            best = min(best, r.fun)
        prof[tuple(int(v) for v in ind)] = -best
    top = max(prof, key=prof.get)
    return np.array(top), prof
