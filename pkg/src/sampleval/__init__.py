"""Reliability of sampled offline recommender evaluation under exposure bias.

The package simulates the full loop: a fully observed interaction
dataset, exposure-biased logging at controlled sparsity, candidate
sampling strategies for evaluation sets, a zoo of recommenders, ranking
metrics with meta-evaluation questions, and a deterministic scenario
grid with figure-ready reports.
"""

__version__ = "0.1.0"

from .dataset import (
    DatasetBundle,
    DatasetError,
    SyntheticConfig,
    generate_synthetic,
    ingest_fully_observed,
    load_bundle,
    save_bundle,
)
from .evaluation import (
    EvaluationError,
    MetaResult,
    UserModelMetrics,
    bootstrap_ci,
    evaluate_models,
    kendall_tau_b,
    meta_compare,
    metric_at_k,
    rank_candidates,
    tie_rate,
)
from .harness import (
    HarnessError,
    RunConfig,
    RunResult,
    ScenarioId,
    desk_config,
    enumerate_grid,
    paper_config,
    run_grid,
)
from .loggers import (
    POLICIES,
    SPARSITY_GRID,
    LoggedMatrix,
    LoggerConfig,
    LoggerError,
    exposure_weights,
    simulate_log,
)
from .models import ModelError, Scorer, build_scorer, load_scorer, random_search, save_scorer
from .report import ReportError, emit_report
from .rng import derive_rng, derive_seed, weighted_sample_without_replacement
from .samplers import (
    SAMPLE_SIZE_GRID,
    STRATEGIES,
    EvaluationSet,
    SamplerError,
    SamplerSpec,
    build_evaluation_set,
    strategy_weights,
)
from .verify import run_verification

__all__ = [
    "__version__",
    "DatasetBundle",
    "DatasetError",
    "SyntheticConfig",
    "generate_synthetic",
    "ingest_fully_observed",
    "load_bundle",
    "save_bundle",
    "EvaluationError",
    "MetaResult",
    "UserModelMetrics",
    "bootstrap_ci",
    "evaluate_models",
    "kendall_tau_b",
    "meta_compare",
    "metric_at_k",
    "rank_candidates",
    "tie_rate",
    "HarnessError",
    "RunConfig",
    "RunResult",
    "ScenarioId",
    "desk_config",
    "enumerate_grid",
    "paper_config",
    "run_grid",
    "POLICIES",
    "SPARSITY_GRID",
    "LoggedMatrix",
    "LoggerConfig",
    "LoggerError",
    "exposure_weights",
    "simulate_log",
    "ModelError",
    "Scorer",
    "build_scorer",
    "load_scorer",
    "random_search",
    "save_scorer",
    "ReportError",
    "emit_report",
    "derive_rng",
    "derive_seed",
    "weighted_sample_without_replacement",
    "SAMPLE_SIZE_GRID",
    "STRATEGIES",
    "EvaluationSet",
    "SamplerError",
    "SamplerSpec",
    "build_evaluation_set",
    "strategy_weights",
    "run_verification",
]
