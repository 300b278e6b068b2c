import numpy as np
import pytest

from sampleval.dataset import (
    DatasetBundle,
    GroundTruthMatrix,
    HoldoutPartition,
    SyntheticConfig,
    TrainLog,
    generate_synthetic,
)
from sampleval.loggers import LoggerConfig, simulate_log


@pytest.fixture(scope="session")
def tiny_bundle():
    """24 test users x 48 items; small enough for exact distribution checks."""
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
    return generate_synthetic(config, seed=11)


@pytest.fixture(scope="session")
def tiny_log(tiny_bundle):
    return simulate_log(tiny_bundle, LoggerConfig("popularity", 0.5, seed=3))


@pytest.fixture()
def handmade_bundle():
    """Fully explicit 3-user x 6-item bundle for hand-checkable oracles.

    Ground truth (columns = items 0..5, H marks held-out cells):

        u0: 1 0 1 0 0 0      holdout: item 4
        u1: 0 1 0 0 1 0      holdout: item 0
        u2: 1 1 0 1 0 0      holdout: item 5
    """
    relevance = np.array(
        [
            [1, 0, 1, 0, 0, 0],
            [0, 1, 0, 0, 1, 0],
            [1, 1, 0, 1, 0, 0],
        ],
        dtype=np.uint8,
    )
    mask = np.zeros((3, 6), dtype=bool)
    mask[0, 4] = mask[1, 0] = mask[2, 5] = True
    holdout = HoldoutPartition(mask=mask, fraction=0.1, seed=0)
    train = TrainLog(
        users=np.array([0, 0, 1, 1, 2, 2, 2], dtype=np.int64),
        items=np.array([0, 2, 1, 4, 0, 1, 3], dtype=np.int64),
        labels=np.array([1, 1, 1, 0, 1, 1, 1], dtype=np.uint8),
    )
    return DatasetBundle(
        user_ids=np.array(["u0", "u1", "u2"], dtype=object),
        item_ids=np.array([f"i{i}" for i in range(6)], dtype=object),
        n_test_users=3,
        n_catalog_items=6,
        train_log=train,
        ground_truth=GroundTruthMatrix(relevance=relevance),
        holdout=holdout,
        provenance={"source": "handmade"},
    )
