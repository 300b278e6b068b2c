"""Scenario-grid execution: enumerate, run deterministically, persist.

A scenario is one (logging policy, sparsity, sampler variant) cell. The
default grid is 3 policies x 8 sparsities x 63 sampler variants = 1,512
scenarios. For each scenario the harness evaluates every model on the
sampled logged evaluation set (L_S) and answers the configured
questions:

* Q1 tie rate of model metric values on L_S,
* Q2 fidelity: τ against the Full sampler on the same logged matrix,
* Q3 robustness: τ against the same sampler applied to the ground
  truth (weights still estimated from the paired log),
* Q4 predictive power: τ against the Full evaluation on ground truth.

Models are trained once per run on the train log (a flag retrains per
logger block with block-derived seeds). References are computed once and
reused: Full-on-L per block, Full-on-truth per run, matched truth-side
sets per scenario. All randomness flows through derived counter-based
generators keyed by (master seed, scenario key, purpose), so output
bytes are identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dataset import DatasetBundle, SyntheticConfig, generate_synthetic, load_bundle
from .evaluation import (
    METRIC_KINDS,
    QUESTIONS,
    TIE_DECIMALS,
    MetaResult,
    evaluate_models,
    meta_compare,
)
from .loggers import POLICIES, SPARSITY_GRID, LoggerConfig, exposure_weights, simulate_log
from .models import DEFAULT_SPACES, MODEL_FAMILIES, build_scorer, random_search, save_scorer
from .rng import derive_rng, derive_seed
from .samplers import (
    FIXED_STRATEGIES,
    PARAMETRIC_STRATEGIES,
    SAMPLE_SIZE_GRID,
    SamplerSpec,
    build_evaluation_set,
)

log = logging.getLogger(__name__)

RESULTS_FILE = "results.csv"
MANIFEST_FILE = "manifest.json"
RESULTS_HEADER = (
    "scenario_id,policy,sparsity,strategy,n,question,metric,k,"
    "mean,ci_low,ci_high,n_users,n_excluded"
)


class HarnessError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

DEFAULT_MODELS = (
    {"name": "popularity", "family": "popularity", "params": {}},
    {"name": "random", "family": "random", "params": {}},
    {"name": "sar_cosine", "family": "sar_cosine", "params": {}},
    {"name": "sar_jaccard", "family": "sar_jaccard", "params": {}},
    {
        "name": "als",
        "family": "als",
        "params": {"latent_dim": 16, "regularization": 0.1, "confidence_alpha": 10.0, "iterations": 10},
    },
    {
        "name": "als_wide",
        "family": "als",
        "params": {"latent_dim": 32, "regularization": 0.05, "confidence_alpha": 20.0, "iterations": 10},
    },
    {
        "name": "bpr",
        "family": "bpr",
        "params": {
            "latent_dim": 16,
            "learning_rate": 0.05,
            "regularization": 0.01,
            "epochs": 15,
            "negatives_per_positive": 1,
        },
    },
)


@dataclass(frozen=True)
class RunConfig:
    """Everything a grid run needs; round-trips through JSON."""

    dataset: dict = field(
        default_factory=lambda: {"kind": "synthetic", "config": {}, "seed": 0}
    )
    policies: tuple = POLICIES
    sparsities: tuple = SPARSITY_GRID
    fixed_strategies: tuple = FIXED_STRATEGIES
    parametric_strategies: tuple = PARAMETRIC_STRATEGIES
    sample_sizes: tuple = SAMPLE_SIZE_GRID
    zipf_exponent: float = 1.0
    weight_clip: tuple = (1e-6, 1e3)
    models: tuple = DEFAULT_MODELS
    tune: bool = False
    tune_iterations: int = 16
    tune_folds: int = 5
    metrics: tuple = (("ndcg", 100),)
    questions: tuple = QUESTIONS
    master_seed: int = 0
    workers: int = 1
    out_dir: str = "run_out"
    bootstrap_resamples: int = 1000
    bootstrap_level: float = 0.95
    retrain_per_block: bool = False
    tie_decimals: int = TIE_DECIMALS
    save_models: bool = False

    def validate(self) -> None:
        for name, axis in (
            ("policies", self.policies),
            ("sparsities", self.sparsities),
            ("models", self.models),
            ("metrics", self.metrics),
            ("questions", self.questions),
        ):
            if len(axis) == 0:
                raise HarnessError(f"grid axis {name!r} is empty")
        if len(self.fixed_strategies) == 0 and (
            len(self.parametric_strategies) == 0 or len(self.sample_sizes) == 0
        ):
            raise HarnessError("sampler axis is empty")
        for p in self.policies:
            if p not in POLICIES:
                raise HarnessError(f"unknown logging policy {p!r}")
        for s in self.sparsities:
            if not 0.0 <= s <= 0.99:
                raise HarnessError(f"sparsity {s} outside [0, 0.99]")
        for st in self.fixed_strategies:
            if st not in FIXED_STRATEGIES:
                raise HarnessError(f"unknown fixed strategy {st!r}")
        for st in self.parametric_strategies:
            if st not in PARAMETRIC_STRATEGIES:
                raise HarnessError(f"unknown parametric strategy {st!r}")
        for n in self.sample_sizes:
            if n < 1:
                raise HarnessError("sample sizes must be >= 1")
        names = [m["name"] for m in self.models]
        if len(set(names)) != len(names):
            raise HarnessError("model names must be unique")
        for m in self.models:
            if m["family"] not in MODEL_FAMILIES:
                raise HarnessError(f"unknown model family {m['family']!r}")
        for kind, k in self.metrics:
            if kind not in METRIC_KINDS:
                raise HarnessError(f"unknown metric kind {kind!r}")
            if k < 1:
                raise HarnessError("metric cutoff must be >= 1")
        for q in self.questions:
            if q not in QUESTIONS:
                raise HarnessError(f"unknown question {q!r}")
        if self.workers < 1:
            raise HarnessError("workers must be >= 1")

    def to_dict(self) -> dict:
        def plain(value):
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            return value

        return {
            key: plain(getattr(self, key))
            for key in (
                "dataset",
                "policies",
                "sparsities",
                "fixed_strategies",
                "parametric_strategies",
                "sample_sizes",
                "zipf_exponent",
                "weight_clip",
                "models",
                "tune",
                "tune_iterations",
                "tune_folds",
                "metrics",
                "questions",
                "master_seed",
                "workers",
                "out_dir",
                "bootstrap_resamples",
                "bootstrap_level",
                "retrain_per_block",
                "tie_decimals",
                "save_models",
            )
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        def tup(value):
            return tuple(tup(v) if isinstance(v, list) else v for v in value)

        kwargs = {}
        for key, value in data.items():
            if key == "metrics":
                kwargs[key] = tuple((kind, int(k)) for kind, k in value)
            elif key == "models":
                kwargs[key] = tuple(dict(m) for m in value)
            elif isinstance(value, list):
                kwargs[key] = tup(value)
            else:
                kwargs[key] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg


def desk_config(out_dir: str = "run_out", master_seed: int = 0, workers: int = 1) -> RunConfig:
    """Small grid that exercises every trend at desk scale: 168 scenarios, 6 models."""
    models = tuple(m for m in DEFAULT_MODELS if m["name"] != "als_wide")
    # Low latent dimension concentrates item positive counts, which is what
    # gives the positivity logger its bias; the reduced positive rate keeps
    # hard negatives consequential for top-100 ranking.
    return RunConfig(
        dataset={
            "kind": "synthetic",
            "config": {"latent_dim": 4, "positive_rate_target": 0.03},
            "seed": 0,
        },
        sparsities=(0.0, 0.10, 0.30, 0.50, 0.85, 0.90, 0.95),
        parametric_strategies=("random",),
        sample_sizes=(1, 5, 20, 100, 500),
        models=models,
        master_seed=master_seed,
        workers=workers,
        out_dir=out_dir,
    )


def paper_config(out_dir: str = "run_out", master_seed: int = 0, workers: int = 1) -> RunConfig:
    """The full 1,512-scenario grid with the seven-model zoo and tuning."""
    return RunConfig(
        master_seed=master_seed,
        workers=workers,
        out_dir=out_dir,
        tune=True,
        tune_iterations=128,
        tune_folds=5,
    )


# ---------------------------------------------------------------------------
# Grid enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioId:
    policy: str
    sparsity: float
    strategy: str
    n: int | None = None

    @property
    def key(self) -> str:
        tail = self.strategy if self.n is None else f"{self.strategy}@{self.n}"
        return f"{self.policy}|s={self.sparsity!r}|{tail}"

    @property
    def scenario_hash(self) -> str:
        return hashlib.sha256(self.key.encode("utf-8")).hexdigest()[:16]


def enumerate_grid(config: RunConfig) -> list[ScenarioId]:
    """All scenarios in deterministic nested order: policy, sparsity, sampler."""
    config.validate()
    out = []
    for policy in config.policies:
        for sparsity in config.sparsities:
            for strategy in config.fixed_strategies:
                out.append(ScenarioId(policy, float(sparsity), strategy))
            for strategy in config.parametric_strategies:
                for n in config.sample_sizes:
                    out.append(ScenarioId(policy, float(sparsity), strategy, int(n)))
    return out


def _sampler_variants(config: RunConfig) -> list[tuple[str, int | None]]:
    out = [(s, None) for s in config.fixed_strategies]
    out.extend((s, int(n)) for s in config.parametric_strategies for n in config.sample_sizes)
    return out


# ---------------------------------------------------------------------------
# Model training
# ---------------------------------------------------------------------------


def _train_models(
    config: RunConfig, bundle: DatasetBundle, extra_tags: tuple = ()
) -> tuple[dict[str, np.ndarray], dict[str, dict]]:
    """Fit every configured model and cache test-user score rows over the catalog."""
    matrices: dict[str, np.ndarray] = {}
    resolved: dict[str, dict] = {}
    test_users = np.arange(bundle.n_test_users)
    for spec in config.models:
        name, family = spec["name"], spec["family"]
        params = dict(spec.get("params", {}))
        if config.tune and family in DEFAULT_SPACES and not params:
            space = DEFAULT_SPACES[family]
            space = type(space)(
                ranges=space.ranges,
                iterations=config.tune_iterations,
                folds=config.tune_folds,
            )
            params, _ = random_search(
                family,
                space,
                bundle.train_log,
                bundle.n_users,
                bundle.n_items,
                seed=derive_seed("search", config.master_seed, name, *extra_tags),
            )
        if family in ("random", "als", "bpr"):
            params.setdefault("seed", derive_seed("model", config.master_seed, name, *extra_tags))
        scorer = build_scorer(family, params, name)
        scorer.fit(bundle.train_log, bundle.n_users, bundle.n_items)
        rows = scorer.scores_for(test_users)[:, : bundle.n_catalog_items]
        matrices[name] = np.ascontiguousarray(rows, dtype=np.float64)
        resolved[name] = {"family": family, "params": params}
        if config.save_models and not extra_tags:
            model_dir = os.path.join(config.out_dir, "models")
            os.makedirs(model_dir, exist_ok=True)
            save_scorer(scorer, os.path.join(model_dir, f"{name}.scorer"))
    return matrices, resolved


# ---------------------------------------------------------------------------
# Block execution (one logged matrix, many sampler variants)
# ---------------------------------------------------------------------------

_STATE: dict = {}


def _format_row(scen: ScenarioId, result: MetaResult) -> str:
    n_field = "" if scen.n is None else str(scen.n)
    return ",".join(
        (
            scen.scenario_hash,
            scen.policy,
            repr(scen.sparsity),
            scen.strategy,
            n_field,
            result.question,
            result.metric,
            str(result.k),
            repr(result.mean),
            repr(result.ci_low),
            repr(result.ci_high),
            str(result.n_users),
            str(result.n_excluded),
        )
    )


def _evaluate_set(config: RunConfig, matrices, es, provenance):
    return evaluate_models(
        es, matrices, config.master_seed, metrics=tuple(config.metrics), provenance=provenance
    )


def _run_block(block_index: int):
    config: RunConfig = _STATE["config"]
    bundle: DatasetBundle = _STATE["bundle"]
    policy, sparsity = _STATE["blocks"][block_index]
    scenarios = [s for s in _STATE["scenarios"] if (s.policy, s.sparsity) == (policy, sparsity)]
    rows: list[str] = []
    failures: list[dict] = []

    try:
        weights = exposure_weights(policy, bundle)
        logged = simulate_log(bundle, LoggerConfig(policy, sparsity, config.master_seed), weights)
        if config.retrain_per_block:
            matrices, _ = _train_models(config, bundle, extra_tags=(policy, repr(sparsity)))
        else:
            matrices = _STATE["matrices"]
    except Exception as exc:
        for scen in scenarios:
            failures.append(
                {"scenario_id": scen.scenario_hash, "key": scen.key, "error": f"{type(exc).__name__}: {exc}"}
            )
        return block_index, rows, failures, {"policy": policy, "sparsity": sparsity, "error": str(exc)}

    block_meta = {
        "policy": policy,
        "sparsity": sparsity,
        "repair_count": logged.repair_count,
        "realized_sparsity": logged.realized_sparsity,
    }
    needs_q2 = "Q2" in config.questions
    needs_q3 = "Q3" in config.questions
    truth_full = _STATE["truth_full"]
    if config.retrain_per_block and ("Q4" in config.questions or needs_q3):
        # references must rank the same fitted models as the scenarios
        spec = SamplerSpec("full", None, config.zipf_exponent, config.weight_clip)
        es = build_evaluation_set(
            bundle, "truth", spec, None, derive_seed("sample", config.master_seed, "reference", "truth")
        )
        truth_full = _evaluate_set(config, matrices, es, {"scenario": "reference", "source": "truth"})

    full_l_umm = None
    full_l_scen = ScenarioId(policy, sparsity, "full")
    if needs_q2 or "full" in config.fixed_strategies:
        try:
            seed = derive_seed("sample", config.master_seed, full_l_scen.key, "logged")
            es = build_evaluation_set(
                bundle, "logged", SamplerSpec("full", None, config.zipf_exponent, config.weight_clip), logged, seed
            )
            full_l_umm = _evaluate_set(config, matrices, es, {"scenario": full_l_scen.key, "source": "logged"})
        except Exception as exc:
            for scen in scenarios:
                failures.append(
                    {"scenario_id": scen.scenario_hash, "key": scen.key, "error": f"{type(exc).__name__}: {exc}"}
                )
            block_meta["error"] = f"full reference failed: {exc}"
            return block_index, rows, failures, block_meta

    for scen in scenarios:
        try:
            spec = SamplerSpec(scen.strategy, scen.n, config.zipf_exponent, config.weight_clip)
            if scen.strategy == "full" and full_l_umm is not None:
                scen_umm = full_l_umm
            else:
                seed = derive_seed("sample", config.master_seed, scen.key, "logged")
                es = build_evaluation_set(bundle, "logged", spec, logged, seed)
                scen_umm = _evaluate_set(config, matrices, es, {"scenario": scen.key, "source": "logged"})

            truth_umm = None
            if needs_q3:
                if scen.strategy == "full" and truth_full is not None:
                    truth_umm = truth_full
                else:
                    seed = derive_seed("sample", config.master_seed, scen.key, "truth")
                    es_truth = build_evaluation_set(bundle, "truth", spec, logged, seed)
                    truth_umm = _evaluate_set(
                        config, matrices, es_truth, {"scenario": scen.key, "source": "truth"}
                    )

            for kind, k in config.metrics:
                for question in config.questions:
                    reference = None
                    if question == "Q2":
                        reference = full_l_umm[(kind, k)]
                    elif question == "Q3":
                        reference = truth_umm[(kind, k)]
                    elif question == "Q4":
                        reference = truth_full[(kind, k)]
                    rng = derive_rng(
                        "bootstrap", config.master_seed, scen.key, question, kind, k
                    )
                    result = meta_compare(
                        question,
                        scen_umm[(kind, k)],
                        reference,
                        rng,
                        resamples=config.bootstrap_resamples,
                        level=config.bootstrap_level,
                        decimals=config.tie_decimals,
                    )
                    rows.append(_format_row(scen, result))
        except Exception as exc:
            failures.append(
                {"scenario_id": scen.scenario_hash, "key": scen.key, "error": f"{type(exc).__name__}: {exc}"}
            )
    return block_index, rows, failures, block_meta


# ---------------------------------------------------------------------------
# Run driver
# ---------------------------------------------------------------------------


@dataclass
class RunResult:
    out_dir: str
    results_path: str
    manifest_path: str
    n_scenarios: int
    n_failed: int
    failures: list[dict]


def load_dataset(config: RunConfig) -> DatasetBundle:
    section = config.dataset
    kind = section.get("kind", "synthetic")
    if kind == "synthetic":
        syn = SyntheticConfig.from_dict(section.get("config", {}))
        return generate_synthetic(syn, seed=int(section.get("seed", 0)))
    if kind == "ingest":
        return load_bundle(section["path"])
    raise HarnessError(f"unknown dataset kind {kind!r}")


def _design_choices(config: RunConfig) -> dict:
    return {
        "popularity_statistic": "train-log interaction counts (logged source: exposure counts in L)",
        "positivity_statistic": "positive counts in the source matrix; truth side counts non-holdout cells",
        "wtd_weights": "clip(q_hat / p_hat); p_hat = (exposed-user count + 1)/(n_test + 1), "
        "q_hat = (holdout count + 1)/(holdout cells + catalog)",
        "wtdh_weights": "clip(1 / p_hat), uniform-target variant",
        "zipf_exponent": config.zipf_exponent,
        "weight_clip": list(config.weight_clip),
        "tie_decimals": config.tie_decimals,
        "tau_variant": "tau_b with tie correction; all-tied users excluded and counted",
        "holdout_exclusion": "holdout cells excluded from positives and pools on both sources",
        "cold_scores": "cold users/items score 0; trained factor scores min-shifted above 0",
        "tiebreak_seeding": "per (master_seed, model, user); scenario-independent",
        "model_training": "once per run on the train log"
        + ("; retrained per logger block" if config.retrain_per_block else ""),
        "q2_reference": "Full sampler on the same logged matrix",
        "q3_reference": "same sampler spec on ground truth, weights from the paired log",
        "q4_reference": "Full evaluation on ground truth",
    }


def run_grid(config: RunConfig, bundle: DatasetBundle | None = None) -> RunResult:
    """Execute the whole grid and write results.csv + manifest.json.

    Deterministic for a fixed (config, master_seed): rows are produced in
    grid order whatever the worker count, and parallel workers share the
    fitted models through fork inheritance (block tasks are pure).
    """
    config.validate()
    os.makedirs(config.out_dir, exist_ok=True)
    if bundle is None:
        bundle = load_dataset(config)
    bundle.validate()

    scenarios = enumerate_grid(config)
    blocks = [(p, float(s)) for p in config.policies for s in config.sparsities]
    log.info("grid: %d scenarios in %d logger blocks", len(scenarios), len(blocks))

    matrices, resolved_models = _train_models(config, bundle)

    truth_full = None
    if "Q3" in config.questions or "Q4" in config.questions:
        spec = SamplerSpec("full", None, config.zipf_exponent, config.weight_clip)
        es = build_evaluation_set(
            bundle, "truth", spec, None, derive_seed("sample", config.master_seed, "reference", "truth")
        )
        truth_full = evaluate_models(
            es,
            matrices,
            config.master_seed,
            metrics=tuple(config.metrics),
            provenance={"scenario": "reference", "source": "truth"},
        )

    _STATE.clear()
    _STATE.update(
        {
            "config": config,
            "bundle": bundle,
            "matrices": matrices,
            "scenarios": scenarios,
            "blocks": blocks,
            "truth_full": truth_full,
        }
    )

    block_rows: dict[int, list[str]] = {}
    failures: list[dict] = []
    block_metas: list[dict | None] = [None] * len(blocks)
    if config.workers == 1:
        for idx in range(len(blocks)):
            idx, rows, fails, meta = _run_block(idx)
            block_rows[idx] = rows
            failures.extend(fails)
            block_metas[idx] = meta
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=config.workers, mp_context=ctx) as pool:
            for idx, rows, fails, meta in pool.map(_run_block, range(len(blocks))):
                block_rows[idx] = rows
                failures.extend(fails)
                block_metas[idx] = meta

    results_path = os.path.join(config.out_dir, RESULTS_FILE)
    with open(results_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for idx in range(len(blocks)):
            for row in block_rows.get(idx, []):
                fh.write(row + "\n")

    failures.sort(key=lambda f: f["key"])
    manifest = {
        "package_version": __version__,
        "config": config.to_dict(),
        "design_choices": _design_choices(config),
        "grid_size": len(scenarios),
        "n_failed_scenarios": len(failures),
        "failures": failures,
        "models": resolved_models,
        "logger_blocks": block_metas,
        "dataset": {
            "n_test_users": bundle.n_test_users,
            "n_catalog_items": bundle.n_catalog_items,
            "n_users": bundle.n_users,
            "n_items": bundle.n_items,
            "n_train_interactions": len(bundle.train_log),
            "holdout_cells": bundle.holdout.n_cells,
            "provenance": bundle.provenance,
        },
    }
    manifest_path = os.path.join(config.out_dir, MANIFEST_FILE)
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if failures:
        log.error("%d scenarios failed; see manifest for diagnostics", len(failures))
    return RunResult(
        out_dir=config.out_dir,
        results_path=results_path,
        manifest_path=manifest_path,
        n_scenarios=len(scenarios),
        n_failed=len(failures),
        failures=failures,
    )
