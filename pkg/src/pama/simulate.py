"""Synthetic scenario generators.

``S_PM``
    lists drawn from the partition-Mallows model with half the rankers
    near-random (``gamma = 0.1``) and the rest of increasing quality.
``S_HS``
    Thurstone hidden scores with a step in the mean at the relevant set.
``S_HS3``
    Thurstone scores whose mean decays smoothly (logistically) with the
    entity index, so there is no clear relevant/background cut.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .model import sample_rankings
from .rankings import indicator_from_order

FAMILIES = ("S_PM", "S_HS", "S_HS3")

# named presets; values are overridable in a config
PRESETS = {
    "S_PM1": {"family": "S_PM", "a": 2.5},
    "S_PM2": {"family": "S_PM", "a": 1.5},
    "S_HS1": {"family": "S_HS", "a_star": 0.5, "b_star": 2.5, "delta": 0.2},
    "S_HS2": {"family": "S_HS", "a_star": -0.5, "b_star": 1.5, "delta": 0.2},
    "S_HS3": {"family": "S_HS3", "a_star": 50.0, "b_star": 0.1},
}


@dataclass
class ScenarioConfig:
    family: str = "S_PM"
    n: int = 100
    m: int = 10
    n1: int = 10
    a: float = 2.5
    phi: float = 0.6
    a_star: float = 0.5
    b_star: float = 2.5
    delta: float = 0.2
    replicates: int = 1
    seed: int = 0
    name: str | None = None

    def validate(self) -> "ScenarioConfig":
        if self.family not in FAMILIES:
            raise ValueError(f"unknown scenario family {self.family!r}; expected one of {FAMILIES}")
        if self.m < 1 or self.n < 1:
            raise ValueError("n and m must be positive")
        if not 1 <= self.n1 <= self.n:
            raise ValueError(f"n1 must lie in 1..n (got n1={self.n1}, n={self.n})")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.family == "S_PM" and (self.phi < 0 or self.a < 0):
            raise ValueError("S_PM needs nonnegative phi and a")
        if self.family == "S_HS3" and self.b_star <= 0:
            raise ValueError("S_HS3 needs b_star > 0")
        return self

    @property
    def label(self) -> str:
        return self.name or self.family

    @classmethod
    def preset(cls, name: str, **overrides) -> "ScenarioConfig":
        if name not in PRESETS:
            raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
        kw = dict(PRESETS[name], name=name)
        kw.update(overrides)
        return cls(**kw).validate()

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TruthBundle:
    ind_true: np.ndarray
    gamma_true: np.ndarray | None = None
    mu: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.ind_true))

    def to_dict(self) -> dict:
        out = {"ind_true": self.ind_true.tolist()}
        if self.gamma_true is not None:
            out["gamma_true"] = self.gamma_true.tolist()
        if self.mu is not None:
            out["mu"] = self.mu.tolist()
        out.update(self.meta)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TruthBundle":
        return cls(
            ind_true=np.asarray(d["ind_true"], dtype=np.int64),
            gamma_true=None if d.get("gamma_true") is None else np.asarray(d["gamma_true"]),
            mu=None if d.get("mu") is None else np.asarray(d["mu"]),
        )


def _leading_indicator(n: int, n1: int) -> np.ndarray:
    return indicator_from_order(np.arange(n1), n)


def spm_gamma(m: int, a: float) -> np.ndarray:
    """Quality schedule: 0.1 for the first half, then ``a + (k - m/2) 2/m``."""
    k = np.arange(1, m + 1, dtype=float)
    return np.where(k <= m / 2, 0.1, a + (k - m / 2) * 2.0 / m)


def shs_mu(n: int, m: int, n1: int, a_star: float, b_star: float, delta: float) -> np.ndarray:
    """``(n, m)`` mean-score matrix with a step at the relevant set.

    The entity offset is ``(n1 + 1 - i) * delta`` for 1-based ``i``, which
    gives 3.7 for entity 1 and ranker 6 and 2.7 for entity 10 and ranker 10
    in the standard strong-signal table.
    """
    i = np.arange(1, n + 1, dtype=float)[:, None]
    k = np.arange(1, m + 1, dtype=float)[None, :]
    mu = a_star + (b_star - a_star) / m * k + (n1 + 1 - i) * delta
    return np.where((k <= m / 2) | (i > n1), 0.0, mu)


def shs3_mu(n: int, m: int, a_star: float, b_star: float) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=float)[:, None]
    k = np.arange(1, m + 1, dtype=float)[None, :]
    mu = 2.0 * a_star * (k / m) / (1.0 + np.exp(-b_star * (70.0 - i)))
    return np.where(k <= m / 2, 0.0, mu)


def rankings_from_scores(S: np.ndarray) -> np.ndarray:
    """``(n, m)`` scores to ``(m, n)`` rankings, highest score ranked first."""
    order = np.argsort(-S, axis=0, kind="stable")
    m = S.shape[1]
    P = np.empty((m, S.shape[0]), dtype=np.int64)
    cols = np.arange(m)[None, :]
    P[cols, order] = np.arange(1, S.shape[0] + 1)[:, None]
    return P


def gen_spm(cfg: ScenarioConfig, rng: np.random.Generator):
    cfg.validate()
    ind = _leading_indicator(cfg.n, cfg.n1)
    gamma = spm_gamma(cfg.m, cfg.a)
    P = sample_rankings(ind, cfg.phi, gamma, rng)
    return P, TruthBundle(ind_true=ind, gamma_true=gamma, meta={"phi_true": cfg.phi})


def _thurstone(mu, rng):
    return rankings_from_scores(mu + rng.standard_normal(mu.shape))


def gen_shs(cfg: ScenarioConfig, rng: np.random.Generator):
    cfg.validate()
    mu = shs_mu(cfg.n, cfg.m, cfg.n1, cfg.a_star, cfg.b_star, cfg.delta)
    return _thurstone(mu, rng), TruthBundle(ind_true=_leading_indicator(cfg.n, cfg.n1), mu=mu)


def gen_shs3(cfg: ScenarioConfig, rng: np.random.Generator):
    """Logistic-mean scenario; the truth is the top-``n1`` entities by index."""
    cfg.validate()
    mu = shs3_mu(cfg.n, cfg.m, cfg.a_star, cfg.b_star)
    return _thurstone(mu, rng), TruthBundle(ind_true=_leading_indicator(cfg.n, cfg.n1), mu=mu)


GENERATORS = {"S_PM": gen_spm, "S_HS": gen_shs, "S_HS3": gen_shs3}


def generate(cfg: ScenarioConfig, rng: np.random.Generator):
    return GENERATORS[cfg.validate().family](cfg, rng)
