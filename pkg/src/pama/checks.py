"""Built-in oracle suite run by ``pama check``.

Each check compares a production routine against an independent brute-force
computation on a small instance. Model functions are looked up through the
module at call time so that a patched implementation is what gets checked.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from . import mle, model
from .rankings import compose, decompose, kendall_tau_bruteforce


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def all_rankings(n: int):
    for perm in permutations(range(1, n + 1)):
        yield np.array(perm, dtype=np.int64)


def brute_log_z(n1: int, theta: float) -> float:
    ident = np.arange(1, n1 + 1)
    vals = [-theta * kendall_tau_bruteforce(p, ident) for p in all_rankings(n1)]
    return float(np.logaddexp.reduce(vals))


def exact_law(ind, phi: float, gamma: float) -> dict:
    """Probability of every full ranking under the model, keyed by tuple."""
    n = len(ind)
    return {tuple(t): float(np.exp(model.log_lik_single(t, ind, phi, gamma)))
            for t in all_rankings(n)}


def _check_normalization():
    rng = np.random.default_rng(11)
    worst = 0.0
    for n, n1 in ((4, 1), (4, 2), (5, 2), (5, 3)):
        ind = np.r_[np.arange(1, n1 + 1), np.zeros(n - n1, dtype=int)]
        for _ in range(3):
            phi, gamma = rng.uniform(0, 3, size=2)
            total = sum(exact_law(ind, phi, gamma).values())
            worst = max(worst, abs(total - 1.0))
    return worst < 1e-10, f"max |sum - 1| = {worst:.2e}"


def _check_mallows_z():
    worst = 0.0
    for n1 in range(1, 7):
        for theta in (0.0, 0.1, 0.5, 2.0):
            worst = max(worst, abs(float(model.log_z_mallows(n1, theta)) - brute_log_z(n1, theta)))
    return worst < 1e-10, f"max abs error = {worst:.2e}"


def _check_power_law():
    worst = 0.0
    for n1 in (1, 3, 7):
        for g in (0.0, 0.7, 3.0):
            direct = np.log(np.sum(np.arange(1, n1 + 2, dtype=float) ** -g))
            worst = max(worst, abs(float(model.log_power_law_norm(g, n1)) - direct))
    return worst < 1e-12, f"max abs error = {worst:.2e}"


def _check_decomposition():
    tau = np.array([2, 6, 4, 1, 7, 5, 3, 8, 9, 10])
    ind = np.array([1, 2, 3, 4, 5, 0, 0, 0, 0, 0])
    d = decompose(tau, ind)
    ok = (d.tau1.tolist() == [2, 4, 3, 1, 5] and d.tau01.tolist() == [3, 4, 1, 1, 1]
          and d.tau0.tolist() == [2, 1, 3, 4, 5] and compose(d, ind).tolist() == tau.tolist())
    return ok, "worked example" + ("" if ok else " mismatch")


def _fd_rel_err(f, x, h=1e-5):
    g, g1, g2 = f(x)
    fp = (f(x + h)[0] - f(x - h)[0]) / (2 * h)
    e1 = abs(fp - g1) / max(abs(g1), 1e-8)
    # difference the analytic first derivative; second differences of g lose too many digits
    fpp = (f(x + h)[1] - f(x - h)[1]) / (2 * h)
    e2 = abs(fpp - g2) / max(abs(g2), 1e-8)
    return max(e1, e2)


def _check_derivatives():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        n1, n0 = int(rng.integers(2, 8)), int(rng.integers(1, 20))
        phi, gam = rng.uniform(0.1, 2.5), rng.uniform(0.1, 2.5)
        W, SB, SD = 1.0, rng.uniform(0, 10), float(rng.integers(0, 10))
        f = lambda g: tuple(float(v) for v in mle.gamma_objective(g, phi, W, SB, SD, n0, n1))
        worst = max(worst, _fd_rel_err(f, gam))
        gams = rng.uniform(0.1, 2.5, size=3)
        SDs = rng.integers(0, 10, size=3).astype(float)
        fphi = lambda p: mle.phi_objective(p, gams, SDs, np.ones(3), n1)
        worst = max(worst, _fd_rel_err(fphi, phi))
    return worst < 1e-4, f"max relative error = {worst:.2e}"


def _check_sampler():
    rng = np.random.default_rng(3)
    ind = np.array([1, 2, 0, 0])
    phi, gamma = 0.6, 1.0
    exact = exact_law(ind, phi, gamma)
    draws = 100_000
    counts: dict = {}
    for t in map(tuple, model.sample_ranking(ind, phi, gamma, rng, size=draws)):
        counts[t] = counts.get(t, 0) + 1
    tv = 0.5 * sum(abs(counts.get(t, 0) / draws - p) for t, p in exact.items())
    return tv < 0.02, f"TV = {tv:.4f} over {draws} draws"


CHECKS = {
    "likelihood-normalization": _check_normalization,
    "mallows-z-bruteforce": _check_mallows_z,
    "power-law-norm": _check_power_law,
    "decomposition-example": _check_decomposition,
    "derivatives-finite-difference": _check_derivatives,
    "sampler-tv": _check_sampler,
}


def run_checks(names=None) -> list[CheckResult]:
    out = []
    for name in names or CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = CHECKS[name]()
        except Exception as e:  # a crashing check is a failing check
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out
