import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from sampleval.evaluation import (
    META_CSV_HEADER,
    EvaluationError,
    bootstrap_ci,
    evaluate_models,
    kendall_tau_b,
    meta_compare,
    meta_csv_row,
    metric_at_k,
    rank_candidates,
    tie_rate,
)
from sampleval.rng import derive_rng
from sampleval.samplers import SamplerSpec, build_evaluation_set


class TestMetricAtK:
    def test_ndcg_oracle(self):
        # hits at ranks 1 and 3 of 2 positives: DCG = 1 + 1/2, IDCG = 1 + 1/log2(3)
        got = metric_at_k("ndcg", np.array([1, 0, 1, 0]), 2, 4)
        want = 1.5 / (1 + 1 / math.log2(3))
        assert abs(got - want) < 1e-15

    def test_perfect_ranking_is_one(self):
        assert metric_at_k("ndcg", np.array([1, 1, 0, 0]), 2, 4) == 1.0
        assert metric_at_k("precision", np.array([1, 1]), 2, 2) == 1.0
        assert metric_at_k("recall", np.array([1, 1, 0]), 2, 3) == 1.0

    def test_precision_fixed_denominator(self):
        # candidate list shorter than k still divides by k
        assert metric_at_k("precision", np.array([1, 1]), 2, 10) == 0.2

    def test_recall_divides_by_positive_count(self):
        assert metric_at_k("recall", np.array([1, 0, 0]), 4, 3) == 0.25

    def test_ndcg_ideal_truncates_at_k(self):
        # 3 positives but k=2: ideal is the best 2
        got = metric_at_k("ndcg", np.array([0, 1, 1]), 3, 2)
        want = (1 / math.log2(3)) / (1 + 1 / math.log2(3))
        assert abs(got - want) < 1e-15

    def test_no_hits_is_zero(self):
        for kind in ("precision", "recall", "ndcg"):
            assert metric_at_k(kind, np.array([0, 0, 0]), 2, 3) == 0.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(EvaluationError):
            metric_at_k("auc", np.array([1]), 1, 1)


class TestRankCandidates:
    def test_distinct_scores_sort_descending(self):
        scores = np.array([0.1, 0.9, 0.5])
        order = rank_candidates(scores, derive_rng("t"))
        np.testing.assert_array_equal(order, [1, 2, 0])

    def test_deterministic_given_rng_tags(self):
        scores = np.array([1.0, 1.0, 1.0, 2.0])
        a = rank_candidates(scores, derive_rng("tiebreak", 0, "m", 7))
        b = rank_candidates(scores, derive_rng("tiebreak", 0, "m", 7))
        np.testing.assert_array_equal(a, b)

    def test_tied_scores_break_uniformly(self):
        scores = np.zeros(3)
        firsts = np.zeros(3)
        n = 6000
        rng = derive_rng("fairness")
        for _ in range(n):
            firsts[rank_candidates(scores, rng)[0]] += 1
        assert np.abs(firsts / n - 1 / 3).max() < 0.05

    def test_nan_scores_rejected(self):
        with pytest.raises(EvaluationError):
            rank_candidates(np.array([1.0, np.nan]), derive_rng("t"))


class TestTieRate:
    def test_oracle_cases(self):
        assert tie_rate(np.array([1.0, 2.0, 3.0])) == 0.0
        assert tie_rate(np.array([5.0, 5.0, 5.0])) == 1.0
        # one tied pair of C(7,2)=21
        assert abs(tie_rate(np.array([1, 1, 2, 3, 4, 5, 6], dtype=float)) - 1 / 21) < 1e-15

    def test_rounding_merges_near_ties(self):
        assert tie_rate(np.array([0.1 + 0.2, 0.3])) == 1.0
        assert tie_rate(np.array([0.3 + 1e-9, 0.3])) == 0.0


class TestKendallTauB:
    def test_frozen_swap_case(self):
        assert abs(kendall_tau_b(np.array([1.0, 2, 3, 4]), np.array([1.0, 2, 4, 3])) - 2 / 3) < 1e-15

    def test_perfect_and_reversed(self):
        a = np.array([1.0, 2, 3, 4])
        assert kendall_tau_b(a, a * 2 + 7) == 1.0  # invariant to increasing transforms
        assert kendall_tau_b(a, -a) == -1.0

    def test_all_tied_side_is_nan(self):
        assert math.isnan(kendall_tau_b(np.array([1.0, 1, 1]), np.array([1.0, 2, 3])))
        assert math.isnan(kendall_tau_b(np.array([1.0, 2, 3]), np.array([2.0, 2, 2])))

    def test_symmetry(self):
        a = np.array([1.0, 3, 2, 2, 5])
        b = np.array([2.0, 1, 4, 4, 3])
        assert kendall_tau_b(a, b) == kendall_tau_b(b, a)

    @settings(max_examples=200, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=5), min_size=2, max_size=12),
        st.integers(min_value=0, max_value=2**31),
    )
    def test_matches_scipy_with_ties(self, a_ints, seed):
        rng = np.random.default_rng(seed)
        a = np.asarray(a_ints, dtype=float)
        b = rng.integers(0, 5, size=a.size).astype(float)
        got = kendall_tau_b(a, b)
        want = stats.kendalltau(a, b, variant="b").statistic
        if math.isnan(got) or math.isnan(want):
            assert math.isnan(got) and math.isnan(want)
        else:
            assert abs(got - want) < 1e-12

    def test_length_mismatch_rejected(self):
        with pytest.raises(EvaluationError):
            kendall_tau_b(np.array([1.0, 2]), np.array([1.0, 2, 3]))


class TestBootstrapCi:
    def test_contains_mean_and_is_deterministic(self):
        v = derive_rng("boot-data").normal(size=100)
        lo1, hi1 = bootstrap_ci(v, derive_rng("boot", 1))
        lo2, hi2 = bootstrap_ci(v, derive_rng("boot", 1))
        assert (lo1, hi1) == (lo2, hi2)
        assert lo1 <= v.mean() <= hi1

    def test_constant_values_degenerate(self):
        lo, hi = bootstrap_ci(np.full(50, 0.5), derive_rng("boot"))
        assert lo == hi == 0.5

    def test_single_value_is_point(self):
        lo, hi = bootstrap_ci(np.array([0.7]), derive_rng("boot"))
        assert lo == hi == 0.7

    def test_empty_is_nan(self):
        lo, hi = bootstrap_ci(np.array([]), derive_rng("boot"))
        assert math.isnan(lo) and math.isnan(hi)

    def test_width_matches_clt(self):
        v = derive_rng("boot-uniform").random(400)
        lo, hi = bootstrap_ci(v, derive_rng("boot"), resamples=2000)
        want = 2 * 1.96 * v.std() / 20  # normal-approximation width
        assert abs((hi - lo) - want) / want < 0.3


@pytest.fixture()
def truth_es(handmade_bundle):
    return build_evaluation_set(handmade_bundle, "truth", SamplerSpec("full"), None, seed=1)


@pytest.fixture()
def two_models(handmade_bundle):
    good = handmade_bundle.ground_truth.relevance.astype(np.float64) + np.linspace(
        0, 0.01, 6
    )
    anti = 1.0 - good
    return {"good": good, "anti": anti}


class TestEvaluateModels:
    def test_oracle_values(self, truth_es, two_models):
        out = evaluate_models(truth_es, two_models, 0, metrics=(("ndcg", 10), ("precision", 2)))
        ndcg = out[("ndcg", 10)]
        assert ndcg.models == ("good", "anti")
        # "good" ranks all positives on top everywhere
        np.testing.assert_allclose(ndcg.values[:, 0], 1.0)
        # u0: positives {0,2} of candidates {0,1,2,3,5}; anti puts them last:
        # ranks 4 and 5 -> DCG = 1/log2(5) + 1/log2(6), IDCG = 1 + 1/log2(3)
        want = (1 / math.log2(5) + 1 / math.log2(6)) / (1 + 1 / math.log2(3))
        assert abs(ndcg.values[0, 1] - want) < 1e-12
        prec = out[("precision", 2)]
        np.testing.assert_allclose(prec.values[:, 0], 1.0)
        np.testing.assert_allclose(prec.values[:, 1], 0.0)

    def test_nan_model_is_named(self, truth_es, two_models):
        bad = dict(two_models)
        bad["broken"] = np.full((3, 6), np.nan)
        with pytest.raises(EvaluationError, match="broken"):
            evaluate_models(truth_es, bad, 0)

    def test_tiebreak_ignores_provenance_and_metrics(self, truth_es, two_models):
        a = evaluate_models(truth_es, two_models, 0, provenance={"scenario": "A"})
        b = evaluate_models(
            truth_es, two_models, 0, metrics=(("ndcg", 100), ("recall", 5)), provenance={"scenario": "B"}
        )
        np.testing.assert_array_equal(a[("ndcg", 100)].values, b[("ndcg", 100)].values)

    def test_master_seed_changes_tiebreaks(self, truth_es):
        flat = {"const": np.zeros((3, 6))}
        a = evaluate_models(truth_es, flat, 0, metrics=(("precision", 1),))
        vals = []
        for seed in range(40):
            out = evaluate_models(truth_es, flat, seed, metrics=(("precision", 1),))
            vals.append(out[("precision", 1)].values[0, 0])
        assert len(set(vals)) > 1  # different seeds break ties differently

    def test_excluded_users_get_nan_rows(self, handmade_bundle, two_models):
        es = build_evaluation_set(handmade_bundle, "truth", SamplerSpec("full"), None, seed=1)
        es.positives[1] = np.empty(0, dtype=np.int64)
        out = evaluate_models(es, two_models, 0)
        umm = out[("ndcg", 100)]
        assert umm.excluded[1] and not umm.excluded[0]
        assert np.isnan(umm.values[1]).all()
        assert umm.provenance["n_excluded_no_positives"] == 1


class TestMetaCompare:
    def test_q1_mean_tie_rate(self, truth_es):
        matrices = {
            "a": np.zeros((3, 6)),
            "b": np.zeros((3, 6)),
            "c": np.ones((3, 6)),
        }
        out = evaluate_models(truth_es, matrices, 0, metrics=(("recall", 6),))
        # recall@6 over the full set is positive-count/positive-count = 1 for
        # every model, so all three models tie on every user
        res = meta_compare("Q1", out[("recall", 6)], None, derive_rng("m"))
        assert res.mean == 1.0
        assert res.n_users == 3 and res.n_excluded == 0

    def test_q2_self_reference_is_exactly_one(self, truth_es, two_models):
        out = evaluate_models(truth_es, two_models, 0)
        umm = out[("ndcg", 100)]
        res = meta_compare("Q2", umm, umm, derive_rng("m"))
        assert res.mean == 1.0 and res.ci_low == 1.0 and res.ci_high == 1.0

    def test_reference_mismatch_rejected(self, truth_es, two_models):
        out = evaluate_models(truth_es, two_models, 0)
        umm = out[("ndcg", 100)]
        other = evaluate_models(truth_es, {"good": two_models["good"]}, 0)[("ndcg", 100)]
        with pytest.raises(EvaluationError, match="different models"):
            meta_compare("Q2", umm, other, derive_rng("m"))
        with pytest.raises(EvaluationError, match="reference"):
            meta_compare("Q4", umm, None, derive_rng("m"))

    def test_all_tied_users_are_excluded(self, truth_es):
        # one constant-score model pair -> per-user tau undefined everywhere
        matrices = {"a": np.zeros((3, 6)), "b": np.zeros((3, 6))}
        out = evaluate_models(truth_es, matrices, 0, metrics=(("recall", 6),))
        umm = out[("recall", 6)]
        res = meta_compare("Q2", umm, umm, derive_rng("m"))
        assert res.n_users == 0 and res.n_excluded == 3
        assert math.isnan(res.mean)

    def test_unknown_question(self, truth_es, two_models):
        umm = evaluate_models(truth_es, two_models, 0)[("ndcg", 100)]
        with pytest.raises(EvaluationError):
            meta_compare("Q5", umm, umm, derive_rng("m"))


def test_meta_csv_row_format(truth_es, two_models):
    umm = evaluate_models(truth_es, two_models, 0)[("ndcg", 100)]
    res = meta_compare("Q2", umm, umm, derive_rng("m"))
    row = meta_csv_row(res, "abc123")
    assert META_CSV_HEADER == "scenario_id,question,metric,k,mean,ci_low,ci_high,n_users,n_excluded"
    assert row == "abc123,Q2,ndcg,100,1.0,1.0,1.0,3,0"
