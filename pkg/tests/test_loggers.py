import numpy as np
import pytest

from sampleval.dataset import round_half_up
from sampleval.loggers import (
    POLICIES,
    SPARSITY_GRID,
    LoggerConfig,
    LoggerError,
    exposure_weights,
    simulate_log,
)


def test_policy_and_sparsity_grids():
    assert POLICIES == ("uniform", "popularity", "positivity")
    assert SPARSITY_GRID == (0.0, 0.10, 0.30, 0.50, 0.70, 0.85, 0.90, 0.95)


class TestExposureWeights:
    def test_uniform_is_flat(self, handmade_bundle):
        w = exposure_weights("uniform", handmade_bundle).probs
        np.testing.assert_allclose(w, np.full(6, 1 / 6))

    def test_popularity_tracks_train_counts(self, handmade_bundle):
        # train interactions per catalog item: i0:2 i1:2 i2:1 i3:1 i4:1 i5:0
        w = exposure_weights("popularity", handmade_bundle).probs
        np.testing.assert_allclose(w, np.array([3, 3, 2, 2, 2, 1]) / 13)

    def test_positivity_tracks_truth_positives(self, handmade_bundle):
        # ground-truth positive counts per item: 2,2,1,1,1,0
        w = exposure_weights("positivity", handmade_bundle).probs
        np.testing.assert_allclose(w, np.array([3, 3, 2, 2, 2, 1]) / 13)

    def test_unknown_policy_rejected(self, handmade_bundle):
        with pytest.raises(LoggerError):
            exposure_weights("oracle", handmade_bundle)


class TestSimulateLog:
    @pytest.mark.parametrize("policy", POLICIES)
    @pytest.mark.parametrize("sparsity", [0.0, 0.30, 0.70, 0.95])
    def test_exact_retention_counts(self, tiny_bundle, policy, sparsity):
        logged = simulate_log(tiny_bundle, LoggerConfig(policy, sparsity, seed=1))
        for u in range(tiny_bundle.n_test_users):
            n_eligible = int((~tiny_bundle.holdout.mask[u]).sum())
            want = max(1, round_half_up((1.0 - sparsity) * n_eligible))
            assert logged.user_items(u).shape[0] == want

    @pytest.mark.parametrize("policy", POLICIES)
    def test_every_user_keeps_a_positive(self, tiny_bundle, policy):
        logged = simulate_log(tiny_bundle, LoggerConfig(policy, 0.95, seed=1))
        for u in range(tiny_bundle.n_test_users):
            assert logged.user_positives(u).size >= 1

    def test_no_repairs_at_zero_sparsity(self, tiny_bundle):
        for policy in POLICIES:
            logged = simulate_log(tiny_bundle, LoggerConfig(policy, 0.0, seed=1))
            assert logged.repair_count == 0
            assert logged.realized_sparsity == 0.0

    def test_zero_sparsity_exposes_everything_eligible(self, tiny_bundle):
        logged = simulate_log(tiny_bundle, LoggerConfig("uniform", 0.0, seed=1))
        for u in range(tiny_bundle.n_test_users):
            eligible = np.flatnonzero(~tiny_bundle.holdout.mask[u])
            np.testing.assert_array_equal(logged.user_items(u), eligible)

    def test_labels_match_ground_truth(self, tiny_bundle, tiny_log):
        rel = tiny_bundle.ground_truth.relevance
        for u in range(tiny_bundle.n_test_users):
            np.testing.assert_array_equal(
                tiny_log.user_labels(u), rel[u, tiny_log.user_items(u)]
            )

    def test_holdout_cells_never_exposed(self, tiny_bundle, tiny_log):
        for u in range(tiny_bundle.n_test_users):
            assert not tiny_bundle.holdout.mask[u, tiny_log.user_items(u)].any()

    def test_exposed_negative_counts_consistent(self, tiny_bundle, tiny_log):
        for u in range(tiny_bundle.n_test_users):
            assert tiny_log.exposed_negative_counts[u] == tiny_log.user_negatives(u).size

    def test_deterministic_per_seed(self, tiny_bundle):
        a = simulate_log(tiny_bundle, LoggerConfig("popularity", 0.5, seed=9))
        b = simulate_log(tiny_bundle, LoggerConfig("popularity", 0.5, seed=9))
        np.testing.assert_array_equal(a.items, b.items)
        c = simulate_log(tiny_bundle, LoggerConfig("popularity", 0.5, seed=10))
        assert not np.array_equal(a.items, c.items)

    def test_item_count_views(self, tiny_bundle, tiny_log):
        n = tiny_bundle.n_catalog_items
        exp = tiny_log.item_exposure_counts(n)
        pos = tiny_log.item_positive_counts(n)
        assert exp.sum() == tiny_log.items.shape[0]
        assert pos.sum() == int(tiny_log.labels.sum())
        assert (pos <= exp).all()

    def test_popularity_exposes_popular_items_more(self, tiny_bundle):
        weights = exposure_weights("popularity", tiny_bundle)
        logged = simulate_log(tiny_bundle, LoggerConfig("popularity", 0.7, seed=1), weights)
        counts = logged.item_exposure_counts(tiny_bundle.n_catalog_items)
        order = np.argsort(weights.probs)
        low, high = counts[order[:16]].mean(), counts[order[-16:]].mean()
        assert high > low

    def test_bad_config_rejected(self):
        with pytest.raises(LoggerError):
            LoggerConfig("uniform", 1.0, seed=0).validate()
        with pytest.raises(LoggerError):
            LoggerConfig("uniform", -0.1, seed=0).validate()
        with pytest.raises(LoggerError):
            LoggerConfig("nope", 0.5, seed=0).validate()

    def test_realized_sparsity_close_to_requested(self, tiny_bundle):
        logged = simulate_log(tiny_bundle, LoggerConfig("uniform", 0.5, seed=1))
        assert abs(logged.realized_sparsity - 0.5) < 0.02
