"""Partition-Mallows rank aggregation."""
from .bayes import ChainConfig, aggregate, posterior_summary, run_chain
from .data import RankData
from .estimators import MomentAggregator, PamaBayes, PamaMLE, check_rankings
from .metrics import coverage, recovery_distance
from .mle import MleConfig, aggregate_mle, fit_mle, mcem_fit_pama_h
from .model import PamaParams, log_lik_joint, log_lik_single, sample_ranking, sample_rankings
from .moment import moment_estimator
from .partial import mcem_fit_partial, run_chain_partial
from .rankings import PartialRanking, compose, decompose, kendall_tau

__version__ = "0.1.0"

__all__ = [
    "ChainConfig", "MleConfig", "MomentAggregator", "PamaBayes", "PamaMLE", "PamaParams",
    "PartialRanking", "RankData", "aggregate", "aggregate_mle", "check_rankings", "compose",
    "coverage", "decompose", "fit_mle", "kendall_tau", "log_lik_joint", "log_lik_single",
    "mcem_fit_pama_h", "mcem_fit_partial", "moment_estimator", "posterior_summary",
    "recovery_distance", "run_chain", "run_chain_partial", "sample_ranking", "sample_rankings",
]
