"""Self-contained property suites behind the ``verify`` CLI command.

Each suite re-checks one module's contracts with independent brute-force
oracles and Monte-Carlo distribution tests, returning machine-readable
pass/fail/skip counts. The full battery runs from a fresh checkout in
well under a minute and overlaps the pytest suite on purpose: this is
the in-the-field smoke check, pytest is the development gate.
"""

from __future__ import annotations

import math
import os
import shutil
import tempfile

import numpy as np

from .dataset import DatasetBundle, SyntheticConfig, generate_synthetic
from .evaluation import kendall_tau_b, metric_at_k, rank_candidates
from .harness import RunConfig, enumerate_grid, run_grid
from .loggers import POLICIES, LoggerConfig, exposure_weights, simulate_log
from .rng import derive_rng, weighted_sample_without_replacement
from .samplers import SamplerSpec, strategy_weights

KUAIREC_ENV = "SAMPLEVAL_KUAIREC_DIR"


def _suite(name: str):
    return {"name": name, "passed": 0, "failed": 0, "skipped": 0, "failures": []}


def _check(suite: dict, ok: bool, message: str) -> None:
    if ok:
        suite["passed"] += 1
    else:
        suite["failed"] += 1
        suite["failures"].append(message)


def tiny_bundle(seed: int = 11) -> DatasetBundle:
    config = SyntheticConfig(
        n_test_users=24,
        n_train_users=60,
        n_items=48,
        latent_dim=4,
        positive_rate_target=0.12,
        popularity_skew_exponent=0.8,
        train_density_target=0.2,
        label_noise=0.05,
        holdout_fraction=0.10,
    )
    return generate_synthetic(config, seed=seed)


# ---------------------------------------------------------------------------
# Brute-force oracles
# ---------------------------------------------------------------------------


def _brute_metric(kind: str, ranked_rel, n_pos: int, k: int) -> float:
    top = list(ranked_rel)[:k]
    hits = sum(1 for r in top if r)
    if kind == "precision":
        return hits / k
    if kind == "recall":
        return hits / n_pos
    dcg = 0.0
    for rank, r in enumerate(top, start=1):
        if r:
            dcg += 1.0 / math.log2(rank + 1)
    idcg = sum(1.0 / math.log2(rank + 1) for rank in range(1, min(k, n_pos) + 1))
    return dcg / idcg


def _brute_tau_b(a, b) -> float:
    m = len(a)
    a = [round(x, 12) for x in a]
    b = [round(x, 12) for x in b]
    conc = disc = tied_a = tied_b = 0
    for i in range(m):
        for j in range(i + 1, m):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0:
                tied_a += 1
            if db == 0:
                tied_b += 1
            if da == 0 or db == 0:
                continue
            if (da > 0) == (db > 0):
                conc += 1
            else:
                disc += 1
    pairs = m * (m - 1) // 2
    if pairs == tied_a or pairs == tied_b:
        return float("nan")
    return (conc - disc) / np.sqrt((pairs - tied_a) * (pairs - tied_b))


def check_metric_oracles(cases: int = 1000) -> dict:
    suite = _suite("metric_oracles")
    rng = derive_rng("verify", "metrics")
    for case in range(cases):
        m = int(rng.integers(2, 60))
        n_pos = int(rng.integers(1, m + 1))
        k = int(rng.integers(1, 80))
        rel = np.zeros(m, dtype=np.int64)
        rel[rng.permutation(m)[:n_pos]] = 1
        for kind in ("precision", "recall", "ndcg"):
            got = metric_at_k(kind, rel, n_pos, k)
            want = _brute_metric(kind, rel, n_pos, k)
            _check(suite, abs(got - want) <= 1e-12, f"case {case}: {kind}@{k} {got} != {want}")
    rng = derive_rng("verify", "tau")
    for case in range(cases):
        m = int(rng.integers(2, 9))
        a = rng.integers(0, 4, size=m) / 3.0
        b = rng.integers(0, 4, size=m) / 3.0
        got = kendall_tau_b(a, b)
        want = _brute_tau_b(a.tolist(), b.tolist())
        same = (math.isnan(got) and math.isnan(want)) or got == want
        _check(suite, same, f"tau case {case}: {got} != {want} for {a} vs {b}")
    return suite


def check_rank_monotonicity(cases: int = 500) -> dict:
    suite = _suite("rank_monotonicity")
    rng = derive_rng("verify", "monotone")
    for case in range(cases):
        n_pos = int(rng.integers(1, 6))
        n_neg = int(rng.integers(0, 40))
        n_extra = int(rng.integers(1, 40))
        scores_pos = rng.standard_normal(n_pos)
        scores_neg = rng.standard_normal(n_neg)
        scores_extra = rng.standard_normal(n_extra)

        def ndcg(pos, negs, tag):
            scores = np.concatenate([pos, negs])
            rel = np.zeros(scores.shape[0], dtype=np.int64)
            rel[: pos.shape[0]] = 1
            order = rank_candidates(scores, derive_rng("verify", "monotone-rank", case, tag))
            return metric_at_k("ndcg", rel[order], pos.shape[0], 100)

        small = ndcg(scores_pos, scores_neg, "small")
        big = ndcg(scores_pos, np.concatenate([scores_neg, scores_extra]), "big")
        _check(suite, big <= small + 1e-12, f"case {case}: nDCG rose {small} -> {big}")
    return suite


def check_sampler_distributions(draws: int = 100_000) -> dict:
    suite = _suite("sampler_distributions")
    bundle = tiny_bundle()
    logged = simulate_log(
        bundle,
        LoggerConfig("positivity", 0.5, seed=3),
        exposure_weights("positivity", bundle),
    )
    strategies = {
        "popularity": SamplerSpec("popularity", 10),  # zipf weights, s = 1
        "skew": SamplerSpec("skew", 10),
        "wtd": SamplerSpec("wtd", 10),
        "wtdh": SamplerSpec("wtdh", 10),
    }
    for name, spec in strategies.items():
        weights = strategy_weights(spec, "logged", bundle, logged)
        probs = weights.probs
        rng = derive_rng("verify", "sampler", name)
        counts = np.zeros(probs.shape[0], dtype=np.int64)
        for _ in range(draws):
            counts[weighted_sample_without_replacement(probs, 1, rng)[0]] += 1
        tv = 0.5 * np.abs(counts / draws - probs).sum()
        _check(suite, tv <= 0.02, f"{name}: total variation {tv:.4f} > 0.02")
    return suite


def check_logger_fidelity() -> dict:
    suite = _suite("logger_fidelity")
    bundle = tiny_bundle()
    eligible = ~bundle.holdout.mask
    positives = bundle.ground_truth.relevance.astype(bool) & eligible
    for policy in POLICIES:
        weights = exposure_weights(policy, bundle)
        for sparsity in (0.0, 0.5, 0.9):
            logged = simulate_log(bundle, LoggerConfig(policy, sparsity, seed=5), weights)
            for u in range(bundle.n_test_users):
                n_eligible = int(eligible[u].sum())
                want = max(1, int(math.floor((1.0 - sparsity) * n_eligible + 0.5)))
                got = logged.user_items(u).shape[0]
                _check(
                    suite,
                    got == want,
                    f"{policy}@{sparsity}: user {u} retained {got}, expected {want}",
                )
                _check(
                    suite,
                    logged.user_positives(u).size >= 1,
                    f"{policy}@{sparsity}: user {u} kept no positive",
                )
            if sparsity == 0.0:
                _check(
                    suite,
                    logged.repair_count == 0,
                    f"{policy}: repair count {logged.repair_count} at sparsity 0",
                )
                kept = sum(logged.user_positives(u).size for u in range(bundle.n_test_users))
                _check(
                    suite,
                    kept == int(positives.sum()),
                    f"{policy}: sparsity 0 lost positives ({kept} != {int(positives.sum())})",
                )
    return suite


def check_grid_shape() -> dict:
    suite = _suite("grid_shape")
    n_default = len(enumerate_grid(RunConfig()))
    _check(suite, n_default == 1512, f"default grid has {n_default} scenarios, not 1512")
    small = RunConfig(
        policies=("uniform",),
        sparsities=(0.0, 0.5),
        fixed_strategies=("full",),
        parametric_strategies=("random",),
        sample_sizes=(1, 2, 5),
    )
    n_small = len(enumerate_grid(small))
    _check(suite, n_small == 8, f"1x2x(1+3) grid has {n_small} scenarios, not 8")
    return suite


def _tiny_run_config(out_dir: str, workers: int) -> RunConfig:
    return RunConfig(
        dataset={"kind": "synthetic", "config": {}, "seed": 11},
        policies=("uniform", "positivity"),
        sparsities=(0.0, 0.7),
        fixed_strategies=("full", "exposed"),
        parametric_strategies=("random",),
        sample_sizes=(2, 5),
        models=(
            {"name": "popularity", "family": "popularity", "params": {}},
            {"name": "random", "family": "random", "params": {}},
            {"name": "sar_cosine", "family": "sar_cosine", "params": {}},
        ),
        metrics=(("ndcg", 10),),
        bootstrap_resamples=200,
        master_seed=6,
        workers=workers,
        out_dir=out_dir,
    )


def check_determinism_and_identity() -> dict:
    suite = _suite("determinism_and_identity")
    bundle = tiny_bundle()
    root = tempfile.mkdtemp(prefix="sampleval-verify-")
    try:
        paths = []
        for workers in (1, 2):
            config = _tiny_run_config(os.path.join(root, f"w{workers}"), workers)
            result = run_grid(config, bundle=bundle)
            _check(suite, result.n_failed == 0, f"{result.n_failed} scenarios failed")
            paths.append(result.results_path)
        with open(paths[0], "rb") as fh:
            bytes_one = fh.read()
        with open(paths[1], "rb") as fh:
            bytes_two = fh.read()
        _check(suite, bytes_one == bytes_two, "1-worker and 2-worker result CSVs differ")

        identity_rows = [
            line.split(",")
            for line in bytes_one.decode("utf-8").splitlines()[1:]
            if line.split(",")[2] == "0.0" and line.split(",")[3] == "full"
        ]
        _check(suite, len(identity_rows) > 0, "no sparsity-0 Full rows found")
        for row in identity_rows:
            question, mean = row[5], row[8]
            if question in ("Q2", "Q3", "Q4"):
                _check(
                    suite,
                    mean == "1.0",
                    f"{row[1]} sparsity 0 Full: {question} mean {mean} != 1.0",
                )
    finally:
        shutil.rmtree(root, ignore_errors=True)
    return suite


def check_kuairec_ingest() -> dict:
    suite = _suite("kuairec_table1")
    data_dir = os.environ.get(KUAIREC_ENV, "")
    dense = os.path.join(data_dir, "small_matrix.csv")
    sparse = os.path.join(data_dir, "big_matrix.csv")
    if not data_dir or not (os.path.exists(dense) and os.path.exists(sparse)):
        suite["skipped"] += 1
        return suite
    from .dataset import convert_watch_log, ingest_fully_observed

    work = tempfile.mkdtemp(prefix="sampleval-kuairec-")
    try:
        truth_path, train_path = convert_watch_log(dense, sparse, work)
        bundle = ingest_fully_observed(truth_path, train_path)
        checks = {
            "test users": (bundle.n_test_users, 1411),
            "catalog items": (bundle.n_catalog_items, 3327),
            "train users": (len(np.unique(bundle.train_log.users)), 7176),
            "train items": (len(np.unique(bundle.train_log.items)), 10728),
            "positives": (int(bundle.ground_truth.relevance.sum()), 217175),
            "observed negatives": (
                bundle.n_test_users * bundle.n_catalog_items
                - int(bundle.ground_truth.relevance.sum())
                - int(bundle.provenance.get("imputed_negative_cells", 0)),
                4459395,
            ),
        }
        for label, (got, want) in checks.items():
            _check(suite, got == want, f"{label}: {got} != {want}")
    finally:
        shutil.rmtree(work, ignore_errors=True)
    return suite


ALL_SUITES = (
    check_metric_oracles,
    check_rank_monotonicity,
    check_sampler_distributions,
    check_logger_fidelity,
    check_grid_shape,
    check_determinism_and_identity,
    check_kuairec_ingest,
)


def run_verification() -> dict:
    """Run every suite; returns a summary with per-suite counts."""
    suites = []
    for fn in ALL_SUITES:
        suite = fn()
        suite["failures"] = suite["failures"][:20]
        suites.append(suite)
    return {
        "suites": suites,
        "passed": sum(s["passed"] for s in suites),
        "failed": sum(s["failed"] for s in suites),
        "skipped": sum(s["skipped"] for s in suites),
        "ok": all(s["failed"] == 0 for s in suites),
    }
