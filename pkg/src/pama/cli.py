"""Command-line entry point.

``pama simulate|fit|benchmark|check --config <path> [--seed N] [--out DIR]
[--partial auto|yes|no]``

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(including failed checks and non-converged optimizations).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io as pio
from .bayes import ChainConfig, ConfigError, aggregate, posterior_summary, run_chain
from .bench import BenchmarkError, run_benchmark, stream_seed
from .checks import run_checks
from .data import RankData
from .diagnostics import geweke_z
from .mle import MleConfig, aggregate_mle, fit_mle, mcem_fit_pama_h
from .partial import mcem_fit_partial, run_chain_partial
from .rankings import RankingError
from .simulate import ScenarioConfig, generate

logger = logging.getLogger("pama")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ConfigError, RankingError, pio.FormatError, BenchmarkError,
                     FileNotFoundError, KeyError, TypeError, ValueError)


class RuntimeFailure(RuntimeError):
    """A run that completed but must be reported as failed."""


def _sub_config(cls, raw: dict | None, where: str):
    raw = dict(raw or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown {where} setting(s): {unknown}")
    if "alpha_prior" in raw:
        raw["alpha_prior"] = tuple(raw["alpha_prior"])
    return cls(**raw).validate()


def _scenario(raw) -> ScenarioConfig:
    if isinstance(raw, str):
        return ScenarioConfig.preset(raw)
    raw = dict(raw)
    preset = raw.pop("preset", None)
    if preset is not None:
        return ScenarioConfig.preset(preset, **raw)
    return ScenarioConfig(**raw).validate()


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_config(path) -> tuple[dict, Path]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file {path} not found")
    cfg = pio.load_json(path)
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg, path.parent


def _seed(cfg, args) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a nonnegative integer")
    return seed


def _out_dir(cfg, args, base) -> Path:
    out = args.out if args.out is not None else cfg.get("out", "pama_out")
    out = _resolve(base, out) if args.out is None else Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg, base, args) -> dict:
    seed = _seed(cfg, args)
    out = _out_dir(cfg, args, base)
    scens = [_scenario(s) for s in cfg.get("scenarios", [cfg.get("scenario", "S_PM1")])]
    manifest = {"schema_version": pio.SCHEMA_VERSION, "master_seed": seed, "files": []}
    for si, scen in enumerate(scens):
        reps = int(cfg.get("replicates", scen.replicates))
        if reps < 1:
            raise ConfigError("replicates must be at least 1")
        for r in range(reps):
            ss = stream_seed(seed, si, r, "data")
            P, truth = generate(scen, np.random.default_rng(ss))
            stem = f"{scen.label}_r{r:03d}"
            pio.write_rankings(out / f"{stem}_rankings.csv", pio.table_from_matrix(P))
            pio.dump_json(dict(truth.to_dict(), scenario=scen.to_dict(), replicate=r),
                          out / f"{stem}_truth.json")
            manifest["files"].append({
                "scenario": scen.label, "replicate": r,
                "seed": int(ss.generate_state(1, dtype=np.uint64)[0]),
                "rankings": f"{stem}_rankings.csv", "truth": f"{stem}_truth.json",
            })
    pio.dump_json(manifest, out / "manifest.json")
    return {"out": str(out), "files": len(manifest["files"])}


def _fit_payload_bayes(res, names, cov_names):
    s = posterior_summary(res)
    tau = aggregate(s)
    payload = {
        "method": "bayes",
        "ranking": [names[i] for i in np.argsort(tau, kind="stable")],
        "ranks": tau,
        "i_bar": s.i_bar,
        "phi_bar": s.phi_bar,
        "gamma_bar": s.gamma_bar,
        "n1": s.n1,
    }
    if s.psi_pos_prob is not None:
        payload["psi_positive_probability"] = dict(zip(cov_names, s.psi_pos_prob))
        payload["psi_bar"] = dict(zip(cov_names, s.psi_bar))
    if s.alpha_bar is not None:
        payload["alpha_bar"] = s.alpha_bar
    diag = {"acceptance_rates": s.acceptance_rates, "geweke_z_log_post": geweke_z(res.trace),
            "kept_samples": len(res)}
    return payload, diag


def _fit_payload_mle(res, names, cov_names):
    ranks = aggregate_mle(res)
    ind = res.params.ind
    rel = np.flatnonzero(ind > 0)
    payload = {
        "method": "mle",
        "ranking": [names[i] for i in rel[np.argsort(ind[rel])]],
        "ranks": ranks,
        "indicator": ind,
        "phi_hat": res.params.phi,
        "gamma_hat": res.params.gamma,
        "n1": res.n1,
    }
    if res.psi is not None:
        payload["psi_hat"] = dict(zip(cov_names, res.psi))
    if res.alpha is not None:
        payload["alpha_hat"] = res.alpha
    diag = {"converged": res.converged, "cycles_used": res.cycles_used,
            "log_lik": res.log_lik, "trace": res.trace, "phi_unidentified": res.unidentified}
    return payload, diag


def cmd_fit(cfg, base, args) -> dict:
    t0 = time.perf_counter()
    seed = _seed(cfg, args)
    out = _out_dir(cfg, args, base)
    if "rankings" not in cfg:
        raise ConfigError("fit needs a 'rankings' file")
    if "n1" not in cfg:
        raise ConfigError("fit needs 'n1'")
    table = pio.load_rankings(_resolve(base, cfg["rankings"]))
    n1 = int(cfg["n1"])
    model = cfg.get("model", "pama")
    method = cfg.get("method", "bayes")
    if method not in ("bayes", "mle"):
        raise ConfigError(f"unknown method {method!r}; expected 'bayes' or 'mle'")
    X, cov_names = None, []
    if model == "covariate":
        if "covariates" not in cfg:
            raise ConfigError("covariate model needs a 'covariates' file")
        cov = pio.load_covariates(_resolve(base, cfg["covariates"]), table.names,
                                  standardize=cfg.get("standardize", True))
        X, cov_names = cov.X, cov.columns
    partial = {"auto": table.is_partial, "yes": True, "no": False}[args.partial]
    if table.is_partial and not partial:
        raise ConfigError("input contains partial lists but --partial no was given")
    rng = np.random.default_rng(stream_seed(seed, "fit"))
    if method == "bayes":
        ccfg = _sub_config(ChainConfig, cfg.get("chain"), "chain")
        if partial:
            res = run_chain_partial(table.lists, n1, ccfg, mode=model, rng=rng, X=X,
                                    steps=cfg.get("steps"))
        else:
            res = run_chain(RankData(table.full_matrix(), X=X), n1, ccfg, mode=model, rng=rng)
        payload, diag = _fit_payload_bayes(res, table.names, cov_names)
        if cfg.get("samples", False):
            pio.write_samples(out / "samples.csv", res)
            diag["samples_file"] = "samples.csv"
    else:
        mcfg = _sub_config(MleConfig, cfg.get("mle"), "mle")
        if model == "pama-h":
            if partial:
                raise ConfigError("the exponential-prior MLE does not support partial lists")
            res = mcem_fit_pama_h(RankData(table.full_matrix()), n1, mcfg, rng=rng)
        elif partial:
            res = mcem_fit_partial(table.lists, n1, mcfg, rng=rng, mode=model, X=X,
                                   samples=cfg.get("samples_per_list"), steps=cfg.get("steps"))
        else:
            res = fit_mle(RankData(table.full_matrix(), X=X), n1, mcfg, mode=model, rng=rng)
        payload, diag = _fit_payload_mle(res, table.names, cov_names)
    payload.update(model=model, partial=partial, entities=table.names)
    doc = pio.result_document("fit", cfg, seed, payload, diag, time.perf_counter() - t0)
    pio.dump_json(doc, out / "result.json")
    if method == "mle" and not diag["converged"]:
        raise RuntimeFailure("optimization did not converge; best iterate written to result.json")
    return {"out": str(out / "result.json")}


def cmd_benchmark(cfg, base, args) -> dict:
    t0 = time.perf_counter()
    seed = _seed(cfg, args)
    out = _out_dir(cfg, args, base)
    scens = [_scenario(s) for s in cfg.get("scenarios", [cfg.get("scenario", "S_PM1")])]
    methods = []
    for m in cfg.get("methods", ["moment"]):
        if isinstance(m, dict):
            m = dict(m, path=str(_resolve(base, m["path"])))
        methods.append(m)
    report = run_benchmark(
        scens, methods, replicates=cfg.get("replicates"), seed=seed,
        chain_cfg=_sub_config(ChainConfig, cfg.get("chain"), "chain"),
        mle_cfg=_sub_config(MleConfig, cfg.get("mle"), "mle"),
    )
    rows_path, agg_path = report.write(out)
    doc = pio.result_document("benchmark", cfg, seed, {"summary": report.aggregate()},
                              {"replicate_file": rows_path.name, "summary_file": agg_path.name},
                              time.perf_counter() - t0)
    pio.dump_json(doc, out / "benchmark.json")
    return {"out": str(out)}


def cmd_check(cfg, base, args) -> dict:
    names = cfg.get("checks") if cfg else None
    results = run_checks(names)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.seconds:7.2f}s  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise RuntimeFailure(f"failed checks: {', '.join(failed)}")
    return {"checks": len(results)}


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "benchmark": cmd_benchmark,
            "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pama", description="Partition-Mallows rank aggregation")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="JSON config file (optional for 'check')")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--partial", choices=("auto", "yes", "no"), default="auto",
                   help="treat input as partial lists (default: detect empty cells)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_doc(kind, exc, code):
    return {"schema_version": pio.SCHEMA_VERSION, "error": kind,
            "type": type(exc).__name__, "message": str(exc), "exit_code": code}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None and args.command != "check":
            raise ConfigError(f"'{args.command}' needs --config")
        cfg, base = load_config(args.config) if args.config else ({}, Path.cwd())
        info = COMMANDS[args.command](cfg, base, args)
    except RuntimeFailure as e:
        print(json.dumps(_error_doc("runtime", e, EXIT_RUNTIME)), file=sys.stderr)
        return EXIT_RUNTIME
    except VALIDATION_ERRORS as e:
        print(json.dumps(_error_doc("validation", e, EXIT_INVALID)), file=sys.stderr)
        return EXIT_INVALID
    except Exception as e:  # noqa: BLE001 - anything else is a runtime failure
        logger.debug("runtime failure", exc_info=True)
        print(json.dumps(_error_doc("runtime", e, EXIT_RUNTIME)), file=sys.stderr)
        return EXIT_RUNTIME
    if info:
        print(json.dumps(info))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
