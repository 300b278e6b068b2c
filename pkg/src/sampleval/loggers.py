"""Exposure-biased logging policies.

A logging policy turns the fully observed ground truth into a partially
observed logged matrix: for each test user it retains an exact count of
eligible cells (all cells minus the holdout), drawn without replacement
with probability proportional to per-item exposure weights. Labels are
copied from the ground truth, every user keeps at least one positive, and
the per-user exposed-negative count is recorded for size-matched sampling.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .dataset import DatasetBundle, DatasetError, round_half_up
from .rng import derive_rng, weighted_sample_without_replacement

POLICIES = ("uniform", "popularity", "positivity")
SPARSITY_GRID = (0.0, 0.10, 0.30, 0.50, 0.70, 0.85, 0.90, 0.95)


class LoggerError(ValueError):
    pass


@dataclass(frozen=True)
class LoggerConfig:
    policy: str
    sparsity: float
    seed: int

    def validate(self) -> None:
        if self.policy not in POLICIES:
            raise LoggerError(f"unknown logging policy {self.policy!r}")
        if not 0.0 <= self.sparsity <= 0.99:
            raise LoggerError(
                f"sparsity must lie in [0, 0.99], got {self.sparsity} "
                "(1.0 would retain nothing)"
            )


@dataclass(frozen=True)
class ItemWeights:
    """A probability vector over the catalog plus its source statistic."""

    probs: np.ndarray
    source: str

    def validate(self) -> None:
        if self.probs.ndim != 1 or self.probs.size == 0:
            raise LoggerError("weights must be a nonempty vector")
        if (self.probs < 0).any():
            raise LoggerError("weights must be non-negative")
        if abs(float(self.probs.sum()) - 1.0) > 1e-9:
            raise LoggerError("weights must sum to 1 within 1e-9")


def exposure_weights(policy: str, bundle: DatasetBundle) -> ItemWeights:
    """Per-item exposure probabilities over the catalog for a policy.

    uniform: every catalog item equally likely. popularity: proportional
    to the item's train-log interaction count plus one. positivity:
    proportional to the item's ground-truth positive count plus one.
    """
    n_cat = bundle.n_catalog_items
    if n_cat == 0:
        raise LoggerError("empty catalog")
    if policy == "uniform":
        probs = np.full(n_cat, 1.0 / n_cat)
    elif policy == "popularity":
        counts = bundle.train_log.item_interaction_counts(bundle.n_items)[:n_cat]
        smoothed = counts.astype(np.float64) + 1.0
        probs = smoothed / smoothed.sum()
    elif policy == "positivity":
        counts = bundle.ground_truth.item_positive_counts()
        smoothed = counts.astype(np.float64) + 1.0
        probs = smoothed / smoothed.sum()
    else:
        raise LoggerError(f"unknown logging policy {policy!r}")
    weights = ItemWeights(probs=probs, source=f"logger:{policy}")
    weights.validate()
    return weights


@dataclass(frozen=True)
class LoggedMatrix:
    """Exposure-masked view of the ground truth in compressed row form.

    ``items[indptr[u]:indptr[u+1]]`` are user ``u``'s exposed catalog items
    in ascending order, with ``labels`` aligned. ``exposed_negative_counts``
    is the per-user count of exposed negatives used by size-matched
    sampling downstream.
    """

    indptr: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    exposed_negative_counts: np.ndarray
    config: LoggerConfig
    repair_count: int
    realized_sparsity: float

    @property
    def n_users(self) -> int:
        return self.indptr.shape[0] - 1

    def user_items(self, user: int) -> np.ndarray:
        return self.items[self.indptr[user] : self.indptr[user + 1]]

    def user_labels(self, user: int) -> np.ndarray:
        return self.labels[self.indptr[user] : self.indptr[user + 1]]

    def user_positives(self, user: int) -> np.ndarray:
        sl = slice(self.indptr[user], self.indptr[user + 1])
        return self.items[sl][self.labels[sl] == 1]

    def user_negatives(self, user: int) -> np.ndarray:
        sl = slice(self.indptr[user], self.indptr[user + 1])
        return self.items[sl][self.labels[sl] == 0]

    def item_exposure_counts(self, n_items: int) -> np.ndarray:
        """Number of users the item was exposed to (= logged cells per item)."""
        return np.bincount(self.items, minlength=n_items).astype(np.int64)

    def item_positive_counts(self, n_items: int) -> np.ndarray:
        pos = self.items[self.labels == 1]
        return np.bincount(pos, minlength=n_items).astype(np.int64)


def simulate_log(
    bundle: DatasetBundle,
    config: LoggerConfig,
    weights: ItemWeights | None = None,
) -> LoggedMatrix:
    """Expose an exact per-user share of eligible ground-truth cells.

    For user ``u`` with eligible cells (catalog minus holdout), the
    retained count is ``round_half_up((1 - sparsity) * n_eligible)``,
    floored at one so a positive can always be kept. Draws are weighted
    without replacement by the policy's exposure weights. If a draw
    contains no positive, the lowest-weight retained item is swapped for
    the user's highest-weight eligible positive; swaps are counted.
    """
    config.validate()
    if weights is None:
        weights = exposure_weights(config.policy, bundle)
    weights.validate()
    rel = bundle.ground_truth.relevance
    hold = bundle.holdout.mask
    n_test = bundle.n_test_users
    probs = weights.probs

    chunks: list[np.ndarray] = []
    label_chunks: list[np.ndarray] = []
    indptr = np.zeros(n_test + 1, dtype=np.int64)
    e_counts = np.zeros(n_test, dtype=np.int64)
    repair_count = 0
    eligible_total = 0

    for u in range(n_test):
        eligible = np.flatnonzero(~hold[u])
        n_eligible = eligible.shape[0]
        eligible_total += n_eligible
        eligible_pos = eligible[rel[u, eligible] == 1]
        if eligible_pos.size == 0:
            raise LoggerError(
                f"user {u} has no eligible positives; the holdout swallowed "
                "every positive, violating the dataset contract"
            )
        m_u = max(1, round_half_up((1.0 - config.sparsity) * n_eligible))
        rng = derive_rng("logger", config.seed, config.policy, config.sparsity, u)
        w = probs[eligible]
        picked = weighted_sample_without_replacement(w, m_u, rng)
        if picked.shape[0] != m_u:
            raise LoggerError(
                f"user {u}: could only retain {picked.shape[0]} of {m_u} cells "
                "(zero-weight items in the eligible set)"
            )
        retained = eligible[picked]
        labels = rel[u, retained]
        if not labels.any():
            # Deterministic repair: drop the lowest-weight retained item,
            # add the highest-weight eligible positive. Ties resolve to the
            # lowest item id because arrays are in ascending item order.
            drop = int(np.argmin(probs[retained]))
            add = int(eligible_pos[np.argmax(probs[eligible_pos])])
            retained[drop] = add
            order = np.argsort(retained)
            retained = retained[order]
            labels = rel[u, retained]
            repair_count += 1
        chunks.append(retained)
        label_chunks.append(labels)
        e_counts[u] = int((labels == 0).sum())
        indptr[u + 1] = indptr[u] + retained.shape[0]

    items = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    labels = np.concatenate(label_chunks) if label_chunks else np.empty(0, dtype=np.uint8)
    realized = 1.0 - (items.shape[0] / eligible_total) if eligible_total else 0.0
    return LoggedMatrix(
        indptr=indptr,
        items=items,
        labels=labels.astype(np.uint8),
        exposed_negative_counts=e_counts,
        config=config,
        repair_count=repair_count,
        realized_sparsity=realized,
    )


def save_logged_matrix(matrix: LoggedMatrix, bundle: DatasetBundle, base_path: str) -> None:
    """Write ``<base>.csv`` with exposed cells and ``<base>.json`` metadata."""
    os.makedirs(os.path.dirname(base_path) or ".", exist_ok=True)
    uid, iid = bundle.user_ids, bundle.item_ids
    with open(base_path + ".csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("user_id,item_id,label\n")
        for u in range(matrix.n_users):
            sl = slice(matrix.indptr[u], matrix.indptr[u + 1])
            for item, label in zip(matrix.items[sl], matrix.labels[sl]):
                fh.write(f"{uid[u]},{iid[item]},{label}\n")
    sidecar = {
        "policy": matrix.config.policy,
        "sparsity": matrix.config.sparsity,
        "seed": matrix.config.seed,
        "repair_count": matrix.repair_count,
        "realized_sparsity": matrix.realized_sparsity,
    }
    with open(base_path + ".json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
