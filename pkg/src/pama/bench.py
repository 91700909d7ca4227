"""Replicate benchmark harness: simulate, fit each method, score."""
from __future__ import annotations

import csv
import logging
import os
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bayes import ChainConfig, aggregate, posterior_summary, run_chain
from .data import RankData
from .metrics import coverage, recovery_distance
from .mle import MleConfig, aggregate_mle, fit_mle, mcem_fit_pama_h
from .moment import moment_estimator
from .simulate import ScenarioConfig, generate

logger = logging.getLogger(__name__)

METHODS = ("PAMA_B", "PAMA_F", "PAMA_HB", "PAMA_HF", "moment")
ROW_FIELDS = ("scenario", "n", "m", "n1", "method", "replicate", "kappa_R", "rho_R")
AGG_FIELDS = ("scenario", "n", "m", "n1", "method", "replicates",
              "kappa_R_mean", "kappa_R_sd", "rho_R_mean", "rho_R_sd")


class BenchmarkError(ValueError):
    pass


def stream_seed(master: int, *keys) -> np.random.SeedSequence:
    """Child seed from a master seed and a path of ints or names."""
    words = [k if isinstance(k, int) else zlib.crc32(str(k).encode()) for k in keys]
    return np.random.SeedSequence(entropy=master, spawn_key=tuple(words))


def _rng(master, *keys):
    return np.random.default_rng(stream_seed(master, *keys))


def _ranks_with_tie(ind) -> np.ndarray:
    ind = np.asarray(ind)
    n, n1 = ind.size, int(np.count_nonzero(ind))
    return np.where(ind > 0, ind, (n + n1 + 1) / 2.0).astype(float)


def fit_method(method: str, P, n1: int, rng, chain_cfg: ChainConfig, mle_cfg: MleConfig):
    """Run one method; returns ``(ranks, gamma_estimate or None)``."""
    data = RankData(P)
    if method in ("PAMA_B", "PAMA_HB"):
        mode = "pama" if method == "PAMA_B" else "pama-h"
        res = run_chain(data, n1, chain_cfg, mode=mode, rng=rng)
        s = posterior_summary(res)
        return aggregate(s).astype(float), s.gamma_bar
    if method == "PAMA_F":
        res = fit_mle(data, n1, mle_cfg, rng=rng)
        return aggregate_mle(res), res.params.gamma
    if method == "PAMA_HF":
        res = mcem_fit_pama_h(data, n1, mle_cfg, rng=rng)
        return aggregate_mle(res), res.params.gamma
    if method == "moment":
        return _ranks_with_tie(moment_estimator(P, n1)), None
    raise BenchmarkError(f"unknown method {method!r}")


@dataclass
class ExternalMethod:
    """Per-replicate scores of a method run outside this package.

    The CSV needs ``replicate``, ``kappa_R`` and ``rho_R`` columns and may add
    ``scenario`` to hold several scenarios in one file.
    """

    name: str
    path: str

    def load(self) -> dict:
        out = {}
        with open(self.path, newline="") as fh:
            reader = csv.DictReader(fh)
            need = {"replicate", "kappa_R", "rho_R"}
            if reader.fieldnames is None or not need <= set(reader.fieldnames):
                raise BenchmarkError(f"external file {self.path} needs columns {sorted(need)}")
            for row in reader:
                key = (row.get("scenario") or None, int(row["replicate"]))
                out[key] = (float(row["kappa_R"]), float(row["rho_R"]))
        return out

    def lookup(self, table, scenario: str, rep: int):
        for key in ((scenario, rep), (None, rep)):
            if key in table:
                return table[key]
        raise BenchmarkError(
            f"external method {self.name!r}: file {self.path} has no row for "
            f"scenario {scenario!r} replicate {rep}")


def parse_methods(methods):
    """Validate and deduplicate method entries, keeping first occurrences."""
    seen, out = set(), []
    for m in methods:
        if isinstance(m, dict):
            m = ExternalMethod(m["name"], m["path"])
        key = m.name if isinstance(m, ExternalMethod) else m
        if not isinstance(m, ExternalMethod) and m not in METHODS:
            raise BenchmarkError(f"unknown method {m!r}; expected one of {METHODS} or an external file")
        if key in seen:
            warnings.warn(f"duplicate method {key!r} ignored", stacklevel=2)
            continue
        seen.add(key)
        out.append(m)
    if not out:
        raise BenchmarkError("no methods given")
    return out


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    details: list = field(default_factory=list)

    def aggregate(self) -> list:
        groups: dict = {}
        for r in self.rows:
            groups.setdefault(tuple(r[k] for k in ROW_FIELDS[:5]), []).append(r)
        out = []
        for key, rs in groups.items():
            kap = np.array([r["kappa_R"] for r in rs])
            rho = np.array([r["rho_R"] for r in rs])
            sd = lambda v: float(v.std(ddof=1)) if v.size > 1 else 0.0
            out.append(dict(zip(ROW_FIELDS[:5], key), replicates=len(rs),
                            kappa_R_mean=float(kap.mean()), kappa_R_sd=sd(kap),
                            rho_R_mean=float(rho.mean()), rho_R_sd=sd(rho)))
        return out

    def mean(self, method: str, metric: str, scenario: str | None = None) -> float:
        vals = [r[metric] for r in self.rows
                if r["method"] == method and (scenario is None or r["scenario"] == scenario)]
        return float(np.mean(vals))

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        rows_path = out_dir / "benchmark_replicates.csv"
        agg_path = out_dir / "benchmark_summary.csv"
        _write_csv(rows_path, ROW_FIELDS, self.rows)
        _write_csv(agg_path, AGG_FIELDS, self.aggregate())
        return rows_path, agg_path


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _one_replicate(si, scen: ScenarioConfig, rep, methods, master, chain_cfg, mle_cfg):
    P, truth = generate(scen, _rng(master, si, rep, "data"))
    rows, details = [], []
    for meth in methods:
        if isinstance(meth, ExternalMethod):
            continue
        ranks, gam = fit_method(meth, P, scen.n1, _rng(master, si, rep, meth), chain_cfg, mle_cfg)
        rows.append(dict(scenario=scen.label, n=scen.n, m=scen.m, n1=scen.n1, method=meth,
                         replicate=rep,
                         kappa_R=recovery_distance(ranks, truth, scen.n, scen.n1),
                         rho_R=coverage(ranks, truth, scen.n1)))
        details.append(dict(rows[-1], gamma_hat=None if gam is None else np.asarray(gam),
                            gamma_true=truth.gamma_true, ranks=ranks))
    return rows, details


def n_jobs_from_env() -> int:
    try:
        return max(int(os.environ.get("PAMA_THREADS", "1")), 1)
    except ValueError:
        return 1


def run_benchmark(scenarios, methods, replicates: int | None = None, seed: int = 0,
                  chain_cfg: ChainConfig | None = None, mle_cfg: MleConfig | None = None,
                  n_jobs: int | None = None) -> BenchmarkReport:
    """Run every method on every replicate of every scenario.

    Replicate ``r`` of scenario ``s`` draws its data and each method's
    randomness from streams keyed by ``(seed, s, r, name)``, so results do not
    depend on which other methods run or on the job count.
    """
    if isinstance(scenarios, ScenarioConfig):
        scenarios = [scenarios]
    methods = parse_methods(methods)
    chain_cfg = (chain_cfg or ChainConfig()).validate()
    mle_cfg = (mle_cfg or MleConfig()).validate()
    jobs = []
    for si, scen in enumerate(scenarios):
        scen.validate()
        reps = scen.replicates if replicates is None else replicates
        if reps < 1:
            raise BenchmarkError("replicates must be at least 1")
        jobs.extend((si, scen, r) for r in range(reps))
    externals = [(m, m.load()) for m in methods if isinstance(m, ExternalMethod)]
    n_jobs = n_jobs_from_env() if n_jobs is None else n_jobs
    args = [(si, scen, r, methods, seed, chain_cfg, mle_cfg) for si, scen, r in jobs]
    if n_jobs > 1:
        from joblib import Parallel, delayed
        results = Parallel(n_jobs=n_jobs)(delayed(_one_replicate)(*a) for a in args)
    else:
        results = [_one_replicate(*a) for a in args]
    report = BenchmarkReport()
    for (si, scen, r), (rows, details) in zip(jobs, results):
        report.rows.extend(rows)
        report.details.extend(details)
        for ext, table in externals:
            kap, rho = ext.lookup(table, scen.label, r)
            report.rows.append(dict(scenario=scen.label, n=scen.n, m=scen.m, n1=scen.n1,
                                    method=ext.name, replicate=r, kappa_R=kap, rho_R=rho))
    return report
