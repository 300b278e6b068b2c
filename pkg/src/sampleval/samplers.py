"""Candidate-set construction for sampled offline evaluation.

An evaluation set pairs each test user's known positives with non-positive
candidates chosen by one of nine strategies:

* ``full`` — every pool item (no sampling).
* ``exposed`` — the user's exposed negatives from the paired log.
* ``random_at_e`` — uniform draws matched in size to the user's
  exposed-negative count.
* ``random``, ``popularity``, ``positivity``, ``wtd``, ``wtdh``, ``skew``
  — ``n`` weighted draws without replacement.

The pool is the catalog minus the user's known positives minus the user's
holdout cells; holdout data never enters an evaluation set, as positives
or as negatives. Strategy weights are computed once per (log, strategy)
over the whole catalog, then restricted to each user's pool; restriction
needs no explicit renormalization because the without-replacement keys
depend only on weight ratios.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .dataset import DatasetBundle, HoldoutPartition
from .loggers import ItemWeights, LoggedMatrix
from .rng import derive_rng, weighted_sample_without_replacement

FIXED_STRATEGIES = ("full", "exposed", "random_at_e")
PARAMETRIC_STRATEGIES = ("random", "popularity", "positivity", "wtd", "wtdh", "skew")
STRATEGIES = FIXED_STRATEGIES + PARAMETRIC_STRATEGIES
SAMPLE_SIZE_GRID = (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000)

SOURCE_TRUTH = "truth"
SOURCE_LOGGED = "logged"


class SamplerError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerSpec:
    """One sampling strategy instance, with its size and weight knobs."""

    strategy: str
    n: int | None = None
    zipf_exponent: float = 1.0
    weight_clip: tuple[float, float] = (1e-6, 1e3)

    def validate(self) -> None:
        if self.strategy not in STRATEGIES:
            raise SamplerError(f"unknown sampling strategy {self.strategy!r}")
        parametric = self.strategy in PARAMETRIC_STRATEGIES
        if parametric and (self.n is None or self.n < 1):
            raise SamplerError(f"strategy {self.strategy!r} needs a sample size n >= 1")
        if not parametric and self.n is not None:
            raise SamplerError(f"strategy {self.strategy!r} takes no sample size")
        if self.zipf_exponent <= 0:
            raise SamplerError("zipf_exponent must be positive")
        lo, hi = self.weight_clip
        if not 0 < lo < hi:
            raise SamplerError("weight_clip must satisfy 0 < low < high")

    @property
    def label(self) -> str:
        return self.strategy if self.n is None else f"{self.strategy}@{self.n}"


# ---------------------------------------------------------------------------
# Strategy weights
# ---------------------------------------------------------------------------


def zipf_weights(statistic: np.ndarray, exponent: float = 1.0) -> ItemWeights:
    """Zipf weights over items ranked by a statistic.

    Ranks run 1..n by descending statistic with ties broken by item id;
    weight(rank r) is proportional to ``r ** -exponent``.
    """
    if exponent <= 0:
        raise SamplerError("zipf exponent must be positive")
    stat = np.asarray(statistic, dtype=np.float64)
    if stat.size == 0:
        raise SamplerError("cannot rank an empty item set")
    order = np.lexsort((np.arange(stat.size), -stat))
    ranks = np.empty(stat.size, dtype=np.float64)
    ranks[order] = np.arange(1, stat.size + 1)
    probs = ranks ** -exponent
    probs /= probs.sum()
    return ItemWeights(probs=probs, source=f"zipf:{exponent}")


def empirical_weights(counts: np.ndarray) -> ItemWeights:
    """Weights proportional to interaction count plus one."""
    c = np.asarray(counts, dtype=np.float64)
    if c.size == 0:
        raise SamplerError("cannot weight an empty item set")
    smoothed = c + 1.0
    return ItemWeights(probs=smoothed / smoothed.sum(), source="empirical:count+1")


def exposure_propensity(log: LoggedMatrix, n_items: int, n_test_users: int) -> np.ndarray:
    """Smoothed per-item exposure frequency: (users exposed + 1) / (users + 1)."""
    counts = log.item_exposure_counts(n_items)
    return (counts + 1.0) / (n_test_users + 1.0)


def wtd_weights(
    log: LoggedMatrix,
    holdout: HoldoutPartition,
    n_items: int,
    n_test_users: int,
    clip: tuple[float, float] = (1e-6, 1e3),
) -> ItemWeights:
    """Target-over-propensity weights estimated from the holdout.

    The holdout cells are a uniform (missing-at-random) draw from the
    ground-truth grid, so their per-item frequency estimates the target
    catalog distribution; dividing by the log's exposure propensity and
    clipping yields debiasing weights.
    """
    if holdout.n_cells == 0:
        raise SamplerError(
            "wtd needs a nonempty holdout to estimate the target distribution; "
            "use wtdh for the uniform-target variant"
        )
    p_hat = exposure_propensity(log, n_items, n_test_users)
    h_counts = holdout.item_counts()
    q_hat = (h_counts + 1.0) / (holdout.n_cells + n_items)
    ratio = np.clip(q_hat / p_hat, clip[0], clip[1])
    return ItemWeights(probs=ratio / ratio.sum(), source="wtd:target/propensity")


def wtdh_weights(
    log: LoggedMatrix,
    n_items: int,
    n_test_users: int,
    clip: tuple[float, float] = (1e-6, 1e3),
) -> ItemWeights:
    """Inverse-propensity weights assuming a uniform target distribution."""
    p_hat = exposure_propensity(log, n_items, n_test_users)
    inv = np.clip(1.0 / p_hat, clip[0], clip[1])
    return ItemWeights(probs=inv / inv.sum(), source="wtdh:1/propensity")


def strategy_weights(
    spec: SamplerSpec,
    source: str,
    bundle: DatasetBundle,
    log: LoggedMatrix | None,
) -> ItemWeights | None:
    """Catalog-level weights for a parametric strategy, or None for uniform.

    popularity ranks items by interaction count in the source matrix and
    positivity by positive count in the source matrix, both turned into
    Zipf weights. The ground truth observes every cell, so its own
    interaction counts are constant by construction; popularity on that
    source falls back to the train-log interaction counts (the same
    global-popularity statistic the logging policies use). skew, wtd and
    wtdh always estimate from the paired log, which is the only exposure
    record a practitioner would hold.
    """
    n_cat = bundle.n_catalog_items
    if spec.strategy in FIXED_STRATEGIES or spec.strategy == "random":
        return None
    if spec.strategy == "popularity":
        if source == SOURCE_LOGGED:
            stat = log.item_exposure_counts(n_cat)
        else:
            stat = bundle.train_log.item_interaction_counts(bundle.n_items)[:n_cat]
        return zipf_weights(stat, spec.zipf_exponent)
    if spec.strategy == "positivity":
        if source == SOURCE_LOGGED:
            stat = log.item_positive_counts(n_cat)
        else:
            eligible = bundle.ground_truth.relevance.astype(bool) & ~bundle.holdout.mask
            stat = eligible.sum(axis=0, dtype=np.int64)
        return zipf_weights(stat, spec.zipf_exponent)
    if spec.strategy == "skew":
        return empirical_weights(log.item_exposure_counts(n_cat))
    if spec.strategy == "wtd":
        return wtd_weights(log, bundle.holdout, n_cat, bundle.n_test_users, spec.weight_clip)
    if spec.strategy == "wtdh":
        return wtdh_weights(log, n_cat, bundle.n_test_users, spec.weight_clip)
    raise SamplerError(f"strategy {spec.strategy!r} has no weight rule")


# ---------------------------------------------------------------------------
# Evaluation sets
# ---------------------------------------------------------------------------


@dataclass
class EvaluationSet:
    """Per-user candidate sets: known positives plus sampled negatives."""

    positives: list[np.ndarray]
    negatives: list[np.ndarray]
    source: str
    spec: SamplerSpec
    seed: int
    capped_users: int = 0
    empty_pool_users: int = 0
    provenance: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return len(self.positives)

    @property
    def true_labels_available(self) -> bool:
        return self.source == SOURCE_TRUTH


def _truth_positives(bundle: DatasetBundle, user: int) -> np.ndarray:
    row = bundle.ground_truth.relevance[user].astype(bool) & ~bundle.holdout.mask[user]
    return np.flatnonzero(row)


def candidate_pool(
    bundle: DatasetBundle,
    user: int,
    source: str,
    log: LoggedMatrix | None = None,
    *,
    exposed_only: bool = False,
) -> np.ndarray:
    """Non-positive candidates for a user: catalog minus positives minus holdout.

    With ``exposed_only`` the pool is restricted to the user's exposed
    negatives in the paired log (which already exclude holdout cells).
    """
    if (exposed_only or source == SOURCE_LOGGED) and log is None:
        raise SamplerError("this pool needs the paired logged matrix")
    if exposed_only:
        return log.user_negatives(user)
    mask = np.ones(bundle.n_catalog_items, dtype=bool)
    if source == SOURCE_LOGGED:
        mask[log.user_positives(user)] = False
    elif source == SOURCE_TRUTH:
        mask[_truth_positives(bundle, user)] = False
    else:
        raise SamplerError(f"unknown source {source!r}")
    mask[bundle.holdout.mask[user]] = False
    return np.flatnonzero(mask)


def build_evaluation_set(
    bundle: DatasetBundle,
    source: str,
    spec: SamplerSpec,
    log: LoggedMatrix | None,
    seed: int,
    weights: ItemWeights | None = None,
) -> EvaluationSet:
    """Construct per-user candidate sets under one sampling strategy.

    ``log`` is the paired logged matrix: it supplies the positives when
    ``source`` is ``"logged"``, the exposed negatives for ``exposed``, the
    per-user counts for ``random_at_e``, and the statistics behind the
    weighted strategies (also when sampling from the ground truth, so the
    same fitted strategy is applied to both sources). It may be None only
    for log-free strategies on the ground truth, e.g. the Full reference.
    Deterministic given (source, spec, seed); per-user draws use derived
    seeds, so results do not depend on user iteration order.
    """
    spec.validate()
    if source not in (SOURCE_TRUTH, SOURCE_LOGGED):
        raise SamplerError(f"unknown source {source!r}")
    if log is None and (
        source == SOURCE_LOGGED
        or spec.strategy in ("exposed", "random_at_e", "skew", "wtd", "wtdh")
    ):
        raise SamplerError(f"strategy {spec.strategy!r} on {source!r} needs the paired log")
    if weights is None:
        weights = strategy_weights(spec, source, bundle, log)
    probs = weights.probs if weights is not None else None

    positives: list[np.ndarray] = []
    negatives: list[np.ndarray] = []
    capped = 0
    empty = 0
    for u in range(bundle.n_test_users):
        pos = (
            log.user_positives(u)
            if source == SOURCE_LOGGED
            else _truth_positives(bundle, u)
        )
        positives.append(pos)
        if spec.strategy == "exposed":
            negatives.append(log.user_negatives(u).copy())
            continue
        pool = candidate_pool(bundle, u, source, log)
        if spec.strategy == "full":
            negatives.append(pool)
            continue
        want = int(log.exposed_negative_counts[u]) if spec.strategy == "random_at_e" else spec.n
        if pool.size == 0:
            if want > 0:
                empty += 1
            negatives.append(pool)
            continue
        if want > pool.size:
            capped += 1
        k = min(want, pool.size)
        rng = derive_rng("sample", seed, spec.strategy, u)
        w = np.ones(pool.size) if probs is None else probs[pool]
        drawn = weighted_sample_without_replacement(w, k, rng)
        negatives.append(pool[drawn])

    digest = ""
    if probs is not None:
        digest = hashlib.sha256(np.ascontiguousarray(probs).tobytes()).hexdigest()[:16]
    provenance = {
        "source": source,
        "strategy": spec.label,
        "logger_policy": log.config.policy if log is not None else None,
        "logger_sparsity": log.config.sparsity if log is not None else None,
        "logger_seed": log.config.seed if log is not None else None,
        "weight_source": weights.source if weights is not None else "uniform",
        "weight_digest": digest,
    }
    return EvaluationSet(
        positives=positives,
        negatives=negatives,
        source=source,
        spec=spec,
        seed=seed,
        capped_users=capped,
        empty_pool_users=empty,
        provenance=provenance,
    )


def save_evaluation_set(es: EvaluationSet, bundle: DatasetBundle, base_path: str) -> None:
    """Write ``<base>.csv`` (user_id,item_id,role) and ``<base>.json``."""
    os.makedirs(os.path.dirname(base_path) or ".", exist_ok=True)
    uid, iid = bundle.user_ids, bundle.item_ids
    with open(base_path + ".csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id,item_id,role\n")
        for u in range(es.n_users):
            for item in es.positives[u]:
                fh.write(f"{uid[u]},{iid[item]},pos\n")
            for item in es.negatives[u]:
                fh.write(f"{uid[u]},{iid[item]},neg\n")
    sidecar = {
        "strategy": es.spec.strategy,
        "n": es.spec.n,
        "zipf_exponent": es.spec.zipf_exponent,
        "weight_clip": list(es.spec.weight_clip),
        "source": es.source,
        "seed": es.seed,
        "capped_users": es.capped_users,
        "empty_pool_users": es.empty_pool_users,
        "provenance": es.provenance,
    }
    with open(base_path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
