"""Per-user ranking metrics and the meta-statistics built on them.

Given candidate sets and model scores, this module ranks candidates,
computes precision/recall/nDCG at a cutoff, and aggregates per-user
model-metric matrices into the four meta-results:

* tie rate — fraction of model pairs with equal per-user metric values,
* fidelity τ — agreement of a sampled evaluation with the full
  evaluation on the same source,
* robustness τ — agreement of the same sampler applied to logged vs
  ground-truth data,
* predictive τ — agreement of a sampled logged evaluation with the full
  ground-truth evaluation.

Metric-value equality (for ties and τ) is exact after rounding to
``TIE_DECIMALS`` decimal digits; exact float equality would be brittle
across summation orders. Ranking tie-breaks use exact score equality
resolved by a seeded permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import derive_rng

METRIC_KINDS = ("precision", "recall", "ndcg")
QUESTIONS = ("Q1", "Q2", "Q3", "Q4")
QUESTION_KINDS = {
    "Q1": "tie_rate",
    "Q2": "fidelity_tau",
    "Q3": "robustness_tau",
    "Q4": "predictive_tau",
}
TIE_DECIMALS = 12
META_CSV_HEADER = "scenario_id,question,metric,k,mean,ci_low,ci_high,n_users,n_excluded"


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Ranking and per-user metrics
# ---------------------------------------------------------------------------


def rank_candidates(scores: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Order candidate indices by descending score.

    Exact score ties are broken by a seeded random permutation applied
    before a stable sort, so tied items appear in permutation order.
    Returns positions into ``scores``.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 1:
        raise EvaluationError("scores must be one-dimensional")
    if np.isnan(s).any():
        raise EvaluationError("scores contain NaN")
    perm = rng.permutation(s.shape[0])
    return perm[np.argsort(-s[perm], kind="stable")]


def metric_at_k(kind: str, ranked_relevance: np.ndarray, n_positives: int, k: int) -> float:
    """precision/recall/nDCG at cutoff k over a ranked 0/1 relevance list.

    Denominators are fixed: precision divides by k and IDCG uses
    min(k, n_positives) ideal gains even when the list is shorter than k.
    """
    if k < 1:
        raise EvaluationError("cutoff k must be >= 1")
    if n_positives < 1:
        raise EvaluationError("metrics are undefined without positives")
    rel = np.asarray(ranked_relevance, dtype=np.float64)[:k]
    if kind == "precision":
        return float(rel.sum() / k)
    if kind == "recall":
        return float(rel.sum() / n_positives)
    if kind == "ndcg":
        ranks = np.arange(1, rel.shape[0] + 1, dtype=np.float64)
        dcg = float((rel / np.log2(ranks + 1.0)).sum())
        ideal = np.arange(1, min(k, n_positives) + 1, dtype=np.float64)
        idcg = float((1.0 / np.log2(ideal + 1.0)).sum())
        return dcg / idcg
    raise EvaluationError(f"unknown metric kind {kind!r}")


# ---------------------------------------------------------------------------
# Model-pair statistics
# ---------------------------------------------------------------------------


def tie_rate(values: np.ndarray, decimals: int = TIE_DECIMALS) -> float:
    """Fraction of unordered model pairs with equal values, one user's row."""
    v = np.round(np.asarray(values, dtype=np.float64), decimals)
    m = v.shape[0]
    if m < 2:
        raise EvaluationError("tie rate needs at least two models")
    _, counts = np.unique(v, return_counts=True)
    tied = int((counts * (counts - 1) // 2).sum())
    return tied / (m * (m - 1) // 2)


def kendall_tau_b(
    values_a: np.ndarray, values_b: np.ndarray, decimals: int = TIE_DECIMALS
) -> float:
    """Tie-corrected rank correlation between two model-value vectors.

    τ_b = (C − D) / sqrt((P − T_A)(P − T_B)) with P = C(M,2); pairs tied
    in both vectors count in neither C nor D. Returns NaN when either
    side is all-tied (undefined denominator); callers exclude such users
    from averages with a count.
    """
    a = np.round(np.asarray(values_a, dtype=np.float64), decimals)
    b = np.round(np.asarray(values_b, dtype=np.float64), decimals)
    if a.shape != b.shape or a.ndim != 1:
        raise EvaluationError("value vectors must share one dimension")
    m = a.shape[0]
    if m < 2:
        raise EvaluationError("rank correlation needs at least two models")
    i, j = np.triu_indices(m, k=1)
    sa = np.sign(a[i] - a[j])
    sb = np.sign(b[i] - b[j])
    concordant = int(((sa * sb) > 0).sum())
    discordant = int(((sa * sb) < 0).sum())
    pairs = m * (m - 1) // 2
    tied_a = int((sa == 0).sum())
    tied_b = int((sb == 0).sum())
    denom_a = pairs - tied_a
    denom_b = pairs - tied_b
    if denom_a == 0 or denom_b == 0:
        return float("nan")
    return (concordant - discordant) / np.sqrt(denom_a * denom_b)


def bootstrap_ci(
    values: np.ndarray,
    rng: np.random.Generator,
    resamples: int = 1000,
    level: float = 0.95,
) -> tuple[float, float]:
    """Percentile CI of the mean under user resampling with replacement.

    Fewer than two users degenerates to the point estimate. The interval
    is widened to contain the sample mean in pathological resamples so
    low <= mean <= high always holds.
    """
    v = np.asarray(values, dtype=np.float64)
    if not 0 < level < 1:
        raise EvaluationError("level must be in (0, 1)")
    if resamples < 1:
        raise EvaluationError("resamples must be >= 1")
    if v.shape[0] == 0:
        return float("nan"), float("nan")
    mean = float(v.mean())
    if v.shape[0] < 2:
        return mean, mean
    idx = rng.integers(0, v.shape[0], size=(resamples, v.shape[0]))
    means = v[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(means, [alpha, 1.0 - alpha])
    return min(float(low), mean), max(float(high), mean)


# ---------------------------------------------------------------------------
# Scenario evaluation
# ---------------------------------------------------------------------------


@dataclass
class UserModelMetrics:
    """One metric value per (test user, model) for a single evaluation."""

    models: tuple[str, ...]
    metric: str
    k: int
    values: np.ndarray  # (n_users, n_models); NaN rows for excluded users
    excluded: np.ndarray  # bool per user: no positives in the evaluation set
    provenance: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return self.values.shape[0]


def evaluate_models(
    eval_set,
    score_matrices: dict[str, np.ndarray],
    master_seed: int,
    metrics: tuple[tuple[str, int], ...] = (("ndcg", 100),),
    provenance: dict | None = None,
) -> dict[tuple[str, int], UserModelMetrics]:
    """Score every model on every user's candidate set.

    Candidates are canonicalized (sorted item ids) before ranking, and the
    tie-break generator is derived from (master seed, model, user) only,
    so two evaluations with identical candidate sets and scores produce
    bit-identical metric values regardless of which scenario asked.
    Users with no positives are excluded (NaN row) rather than failing.
    """
    models = tuple(score_matrices)
    if not models:
        raise EvaluationError("no models to evaluate")
    for name, matrix in score_matrices.items():
        if np.isnan(matrix).any():
            raise EvaluationError(f"model {name!r} produced NaN scores")
    n_users = eval_set.n_users
    out = {
        (kind, k): np.full((n_users, len(models)), np.nan, dtype=np.float64)
        for kind, k in metrics
    }
    excluded = np.zeros(n_users, dtype=bool)
    for u in range(n_users):
        pos = eval_set.positives[u]
        if pos.size == 0:
            excluded[u] = True
            continue
        candidates = np.sort(np.concatenate([pos, eval_set.negatives[u]]))
        relevance = np.isin(candidates, pos, assume_unique=True)
        for mi, name in enumerate(models):
            scores = score_matrices[name][u, candidates]
            rng = derive_rng("tiebreak", master_seed, name, u)
            order = rank_candidates(scores, rng)
            ranked_rel = relevance[order]
            for kind, k in metrics:
                out[(kind, k)][u, mi] = metric_at_k(kind, ranked_rel, pos.size, k)
    prov = dict(provenance or {})
    prov["n_excluded_no_positives"] = int(excluded.sum())
    return {
        (kind, k): UserModelMetrics(
            models=models,
            metric=kind,
            k=k,
            values=out[(kind, k)],
            excluded=excluded.copy(),
            provenance=dict(prov),
        )
        for kind, k in metrics
    }


# ---------------------------------------------------------------------------
# Meta comparison
# ---------------------------------------------------------------------------


@dataclass
class MetaResult:
    """Per-scenario aggregate answering one question for one metric."""

    question: str
    kind: str
    metric: str
    k: int
    per_user: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    ci_level: float
    ci_resamples: int
    n_users: int
    n_excluded: int
    provenance: dict = field(default_factory=dict)


def meta_compare(
    question: str,
    scenario: UserModelMetrics,
    reference: UserModelMetrics | None,
    rng: np.random.Generator,
    resamples: int = 1000,
    level: float = 0.95,
    decimals: int = TIE_DECIMALS,
) -> MetaResult:
    """Aggregate one scenario into a MetaResult.

    Q1 needs no reference; Q2–Q4 correlate the scenario's per-user model
    values against the reference's. Users excluded on either side are
    dropped and counted; users with an all-tied side (undefined τ_b) are
    likewise excluded with a count.
    """
    if question not in QUESTION_KINDS:
        raise EvaluationError(f"unknown question {question!r}")
    kind = QUESTION_KINDS[question]
    n_total = scenario.n_users

    if question == "Q1":
        valid = ~scenario.excluded
        per_user = np.array(
            [tie_rate(scenario.values[u], decimals) for u in np.flatnonzero(valid)]
        )
    else:
        if reference is None:
            raise EvaluationError(f"{question} requires a reference evaluation")
        if reference.models != scenario.models:
            raise EvaluationError("scenario and reference evaluate different models")
        if reference.n_users != n_total:
            raise EvaluationError("scenario and reference cover different user sets")
        valid = ~scenario.excluded & ~reference.excluded
        taus = np.array(
            [
                kendall_tau_b(scenario.values[u], reference.values[u], decimals)
                for u in np.flatnonzero(valid)
            ]
        )
        per_user = taus[~np.isnan(taus)] if taus.size else taus

    n_users = int(per_user.shape[0])
    mean = float(per_user.mean()) if n_users else float("nan")
    low, high = bootstrap_ci(per_user, rng, resamples=resamples, level=level)
    prov = {
        "scenario": dict(scenario.provenance),
        "reference": dict(reference.provenance) if reference is not None else None,
        "degenerate_ci": n_users < 2,
    }
    return MetaResult(
        question=question,
        kind=kind,
        metric=scenario.metric,
        k=scenario.k,
        per_user=per_user,
        mean=mean,
        ci_low=low,
        ci_high=high,
        ci_level=level,
        ci_resamples=resamples,
        n_users=n_users,
        n_excluded=n_total - n_users,
        provenance=prov,
    )


def meta_csv_row(result: MetaResult, scenario_id: str) -> str:
    """Serialize one MetaResult to the documented 9-column CSV row."""
    fields = (
        scenario_id,
        result.question,
        result.metric,
        str(result.k),
        repr(result.mean),
        repr(result.ci_low),
        repr(result.ci_high),
        str(result.n_users),
        str(result.n_excluded),
    )
    return ",".join(fields)
