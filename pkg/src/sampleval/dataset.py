"""Fully observed evaluation data: ground truth, train log, holdout.

The central object is a :class:`DatasetBundle` holding

* a binary ground-truth relevance matrix over test users and a catalog of
  items, with every cell observed,
* a train log of (user, item, label) triples used only to fit models,
* a holdout partition of ground-truth cells reserved for propensity
  estimation and never exposed to logging or evaluation.

Users and items are identified externally by opaque strings and internally
by dense integer positions. Test users occupy positions ``0..n_test-1`` of
the user index and catalog items occupy positions ``0..n_catalog-1`` of the
item index; train-only users and items follow.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .rng import derive_rng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


class DatasetError(ValueError):
    """Raised when input data or a configuration violates a contract."""


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero toward +inf."""
    return int(math.floor(x + 0.5))


def binarize_engagement(watch_seconds: float, duration_seconds: float) -> bool:
    """True when cumulative watch time strictly exceeds twice the duration."""
    if duration_seconds <= 0:
        raise DatasetError(f"item duration must be positive, got {duration_seconds}")
    if watch_seconds < 0:
        raise DatasetError(f"watch time must be non-negative, got {watch_seconds}")
    return watch_seconds > 2.0 * duration_seconds


@dataclass(frozen=True)
class GroundTruthMatrix:
    """Dense binary relevance over test users x catalog items."""

    relevance: np.ndarray  # uint8, shape (n_test_users, n_items)

    @property
    def n_test_users(self) -> int:
        return self.relevance.shape[0]

    @property
    def n_items(self) -> int:
        return self.relevance.shape[1]

    def user_positives(self, user: int) -> np.ndarray:
        return np.flatnonzero(self.relevance[user])

    def positives_per_user(self) -> np.ndarray:
        return self.relevance.sum(axis=1, dtype=np.int64)

    def item_positive_counts(self) -> np.ndarray:
        return self.relevance.sum(axis=0, dtype=np.int64)


@dataclass(frozen=True)
class HoldoutPartition:
    """Cells of the ground truth withheld for propensity estimation.

    Holdout cells are disjoint from everything a logging policy may expose
    and from every evaluation candidate set; they exist solely so that
    debiasing samplers can estimate a target item distribution.
    """

    mask: np.ndarray  # bool, shape (n_test_users, n_items)
    fraction: float
    seed: int
    released_positive_cells: int = 0

    @property
    def n_cells(self) -> int:
        return int(self.mask.sum())

    def item_counts(self) -> np.ndarray:
        return self.mask.sum(axis=0, dtype=np.int64)

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Row and column arrays of held-out cells in canonical order."""
        rows, cols = np.nonzero(self.mask)
        return rows, cols


def make_holdout(truth: GroundTruthMatrix, fraction: float, seed: int) -> HoldoutPartition:
    """Withhold a uniform random fraction of ground-truth cells.

    Args:
        truth: the fully observed relevance matrix.
        fraction: share of cells to withhold, in ``(0, 0.5]``.
        seed: master seed; the draw is derived from it deterministically.
    """
    if not 0.0 < fraction <= 0.5:
        raise DatasetError(f"holdout fraction must be in (0, 0.5], got {fraction}")
    n_cells = truth.n_test_users * truth.n_items
    count = round_half_up(fraction * n_cells)
    rng = derive_rng("holdout", seed)
    flat = rng.choice(n_cells, size=count, replace=False)
    mask = np.zeros(n_cells, dtype=bool)
    mask[flat] = True
    mask = mask.reshape(truth.relevance.shape)
    # A user whose every positive lands in the holdout could never be
    # exposed or evaluated; release that user's lowest held-out positive.
    rel = truth.relevance.astype(bool)
    released = 0
    for u in np.flatnonzero((rel & ~mask).sum(axis=1) == 0):
        cols = np.flatnonzero(rel[u] & mask[u])
        if cols.size:
            mask[u, cols[0]] = False
            released += 1
    return HoldoutPartition(
        mask=mask, fraction=fraction, seed=seed, released_positive_cells=released
    )


@dataclass(frozen=True)
class TrainLog:
    """Interaction triples used to fit recommenders.

    ``users`` and ``items`` are dense positions into the bundle indexes;
    ``labels`` are 0/1; ``weights`` is an optional non-negative engagement
    weight per triple.
    """

    users: np.ndarray
    items: np.ndarray
    labels: np.ndarray
    weights: np.ndarray | None = None

    def __len__(self) -> int:
        return self.users.shape[0]

    def item_interaction_counts(self, n_items: int) -> np.ndarray:
        """Number of logged triples per item, any label."""
        return np.bincount(self.items, minlength=n_items).astype(np.int64)

    def positive_triples(self) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
        pos = self.labels == 1
        w = self.weights[pos] if self.weights is not None else None
        return self.users[pos], self.items[pos], w


@dataclass(frozen=True)
class DatasetBundle:
    """A complete dataset: indexes, train log, ground truth, holdout."""

    user_ids: np.ndarray  # external ids, test users first
    item_ids: np.ndarray  # external ids, catalog items first
    n_test_users: int
    n_catalog_items: int
    train_log: TrainLog
    ground_truth: GroundTruthMatrix
    holdout: HoldoutPartition
    provenance: dict = field(default_factory=dict)

    @property
    def n_users(self) -> int:
        return self.user_ids.shape[0]

    @property
    def n_items(self) -> int:
        return self.item_ids.shape[0]

    def validate(self) -> None:
        """Check structural invariants, raising :class:`DatasetError`."""
        gt = self.ground_truth
        if gt.relevance.shape != (self.n_test_users, self.n_catalog_items):
            raise DatasetError("ground truth shape disagrees with the indexes")
        if self.holdout.mask.shape != gt.relevance.shape:
            raise DatasetError("holdout mask shape disagrees with the ground truth")
        if not np.isin(gt.relevance, (0, 1)).all():
            raise DatasetError("ground-truth relevance must be 0/1")
        if self.n_test_users > self.n_users or self.n_catalog_items > self.n_items:
            raise DatasetError("test users / catalog exceed the index sizes")
        zero = np.flatnonzero(gt.positives_per_user() == 0)
        if zero.size:
            raise DatasetError(
                f"{zero.size} test users have no positives (first: {zero[:5].tolist()})"
            )
        eligible = (gt.relevance.astype(bool) & ~self.holdout.mask).sum(axis=1)
        starved = np.flatnonzero(eligible == 0)
        if starved.size:
            raise DatasetError(
                f"{starved.size} test users have every positive held out "
                f"(first: {starved[:5].tolist()})"
            )
        tl = self.train_log
        if not (len(tl.users) == len(tl.items) == len(tl.labels)):
            raise DatasetError("train log arrays have mismatched lengths")
        if len(tl) == 0:
            raise DatasetError("train log is empty")
        if tl.users.min() < 0 or tl.users.max() >= self.n_users:
            raise DatasetError("train log references unknown users")
        if tl.items.min() < 0 or tl.items.max() >= self.n_items:
            raise DatasetError("train log references unknown items")
        if not np.isin(tl.labels, (0, 1)).all():
            raise DatasetError("train labels must be 0/1")
        if tl.weights is not None and (tl.weights < 0).any():
            raise DatasetError("train weights must be non-negative")
        pairs = tl.users.astype(np.int64) * self.n_items + tl.items
        if np.unique(pairs).size != pairs.size:
            raise DatasetError("train log contains duplicate (user, item) pairs")


# ---------------------------------------------------------------------------
# Synthetic generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the synthetic generator.

    Relevance comes from a latent-factor rule: user and item vectors are
    standard normal, and an item is relevant to a user when their inner
    product exceeds a per-user threshold calibrated so that the expected
    positive rate matches ``positive_rate_target``. The train log samples
    items per train user under a power-law popularity distribution
    (exponent ``popularity_skew_exponent``), labels them with the same
    latent rule, and flips each label independently with probability
    ``label_noise``.
    """

    n_test_users: int = 200
    n_train_users: int = 500
    n_items: int = 500
    latent_dim: int = 8
    positive_rate_target: float = 0.05
    popularity_skew_exponent: float = 0.8
    train_density_target: float = 0.15
    label_noise: float = 0.05
    holdout_fraction: float = 0.10

    def validate(self) -> None:
        if min(self.n_test_users, self.n_train_users, self.n_items) < 1:
            raise DatasetError("user and item counts must be positive")
        if self.n_test_users > self.n_train_users:
            raise DatasetError("test users must be a subset of train users")
        if self.latent_dim < 1:
            raise DatasetError("latent_dim must be positive")
        for name in ("positive_rate_target", "train_density_target"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise DatasetError(f"{name} must lie in (0, 1), got {value}")
        if not 0.0 <= self.label_noise < 0.5:
            raise DatasetError("label_noise must lie in [0, 0.5)")
        if self.positive_rate_target * self.n_items < 1.0:
            raise DatasetError(
                "infeasible positive_rate_target: expected positives per user "
                f"is {self.positive_rate_target * self.n_items:.3f} < 1"
            )
        if not 0.0 < self.holdout_fraction <= 0.5:
            raise DatasetError("holdout_fraction must lie in (0, 0.5]")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, payload: dict) -> "SyntheticConfig":
        unknown = set(payload) - set(cls.__dataclass_fields__)
        if unknown:
            raise DatasetError(f"unknown synthetic config fields: {sorted(unknown)}")
        return cls(**payload)


def _pad_ids(prefix: str, count: int) -> np.ndarray:
    width = max(4, len(str(count - 1)))
    return np.array([f"{prefix}{i:0{width}d}" for i in range(count)], dtype=object)


def generate_synthetic(config: SyntheticConfig, seed: int) -> DatasetBundle:
    """Generate a fully observed bundle from latent factors.

    The generator guarantees at least one positive per test user (forcing
    the top-scored item when the calibrated draw would give none) and
    reports the forced count in the bundle provenance.
    """
    config.validate()
    n_items = config.n_items

    rng_latent = derive_rng("synthetic-latent", seed)
    user_vecs = rng_latent.standard_normal((config.n_train_users, config.latent_dim))
    item_vecs = rng_latent.standard_normal((n_items, config.latent_dim))
    scores = user_vecs @ item_vecs.T

    # Per-user positive counts: binomial around the target, floored at one.
    rng_counts = derive_rng("synthetic-counts", seed)
    k_test = rng_counts.binomial(n_items, config.positive_rate_target, size=config.n_test_users)
    forced = int((k_test == 0).sum())
    k_test = np.maximum(k_test, 1)

    relevance = np.zeros((config.n_test_users, n_items), dtype=np.uint8)
    for u in range(config.n_test_users):
        top = np.argpartition(scores[u], n_items - k_test[u])[n_items - k_test[u]:]
        relevance[u, top] = 1

    # Per-train-user latent thresholds; test users reuse their calibrated cut.
    k_base = max(1, round_half_up(config.positive_rate_target * n_items))
    k_train = np.full(config.n_train_users, k_base, dtype=np.int64)
    k_train[: config.n_test_users] = k_test
    thresholds = np.empty(config.n_train_users)
    for u in range(config.n_train_users):
        thresholds[u] = np.partition(scores[u], n_items - k_train[u])[n_items - k_train[u]]

    # Power-law exposure over a random popularity order of the catalog.
    rng_pop = derive_rng("synthetic-popularity", seed)
    order = rng_pop.permutation(n_items)
    ranks = np.empty(n_items, dtype=np.float64)
    ranks[order] = np.arange(1, n_items + 1)
    exposure = ranks ** (-config.popularity_skew_exponent)
    exposure /= exposure.sum()

    m_train = round_half_up(config.train_density_target * n_items)
    if m_train < 1:
        raise DatasetError("train_density_target yields zero interactions per user")
    users_out, items_out, labels_out = [], [], []
    from .rng import weighted_sample_without_replacement

    for u in range(config.n_train_users):
        rng_u = derive_rng("synthetic-train", seed, u)
        drawn = weighted_sample_without_replacement(exposure, m_train, rng_u)
        lab = (scores[u, drawn] >= thresholds[u]).astype(np.uint8)
        flips = rng_u.random(drawn.shape[0]) < config.label_noise
        lab ^= flips.astype(np.uint8)
        users_out.append(np.full(drawn.shape[0], u, dtype=np.int64))
        items_out.append(drawn)
        labels_out.append(lab)

    train_log = TrainLog(
        users=np.concatenate(users_out),
        items=np.concatenate(items_out),
        labels=np.concatenate(labels_out),
    )
    truth = GroundTruthMatrix(relevance=relevance)
    holdout = make_holdout(truth, config.holdout_fraction, seed)

    provenance = {
        "source": "synthetic",
        "seed": seed,
        "config": config.to_dict(),
        "forced_positive_users": forced,
        "realized_positive_rate": float(relevance.mean()),
        "realized_train_density": len(train_log)
        / float(config.n_train_users * n_items),
        "train_positive_share": float(train_log.labels.mean()),
        "holdout_released_positive_cells": holdout.released_positive_cells,
    }
    bundle = DatasetBundle(
        user_ids=_pad_ids("u", config.n_train_users),
        item_ids=_pad_ids("i", n_items),
        n_test_users=config.n_test_users,
        n_catalog_items=n_items,
        train_log=train_log,
        ground_truth=truth,
        holdout=holdout,
        provenance=provenance,
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Ingestion of externally produced data
# ---------------------------------------------------------------------------

_REQUIRED_TEST_COLUMNS = ("user_id", "item_id", "label")


def _read_triplet_csv(path: str, want_weight: bool) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, dtype={"user_id": str, "item_id": str})
    except Exception as exc:  # pandas raises several parser types
        raise DatasetError(f"{path}: cannot parse CSV ({exc})") from exc
    for col in _REQUIRED_TEST_COLUMNS:
        if col not in df.columns:
            raise DatasetError(f"{path}: missing required column {col!r}")
    labels = pd.to_numeric(df["label"], errors="coerce")
    bad = labels.isna() | ~labels.isin((0, 1))
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise DatasetError(
            f"{path}: line {row + 2}: label {df['label'].iloc[row]!r} is not 0/1"
        )
    df["label"] = labels.astype(np.uint8)
    if want_weight and "weight" in df.columns:
        weights = pd.to_numeric(df["weight"], errors="coerce")
        if weights.isna().any() or (weights < 0).any():
            row = int(np.flatnonzero((weights.isna() | (weights < 0)).to_numpy())[0])
            raise DatasetError(
                f"{path}: line {row + 2}: weight {df['weight'].iloc[row]!r} is invalid"
            )
        df["weight"] = weights.astype(np.float64)
    for col in ("user_id", "item_id"):
        values = df[col]
        if values.isna().any():
            row = int(np.flatnonzero(values.isna().to_numpy())[0])
            raise DatasetError(f"{path}: line {row + 2}: empty {col}")
        joined = values.str.contains(r'[,"\n\r]', regex=True)
        if joined.any():
            row = int(np.flatnonzero(joined.to_numpy())[0])
            raise DatasetError(
                f"{path}: line {row + 2}: {col} contains a comma, quote or newline"
            )
    return df


def ingest_fully_observed(
    test_path: str,
    train_path: str,
    *,
    holdout_fraction: float = 0.10,
    holdout_seed: int = 0,
    coverage_threshold: float = 0.99,
    holdout: HoldoutPartition | None = None,
) -> DatasetBundle:
    """Build a bundle from canonical CSV files.

    ``test_path`` must cover at least ``coverage_threshold`` of the test
    user x item grid; the missing remainder is imputed as negative and the
    imputed count recorded in the provenance. Test users with zero
    positives are dropped with a log message. ``train_path`` holds
    ``user_id,item_id,label[,weight]`` triples with no duplicate pairs.
    """
    test_df = _read_triplet_csv(test_path, want_weight=False)
    train_df = _read_triplet_csv(train_path, want_weight=True)
    if len(test_df) == 0:
        raise DatasetError(f"{test_path}: test matrix is empty")

    test_users = np.array(sorted(test_df["user_id"].unique()), dtype=object)
    catalog = np.array(sorted(test_df["item_id"].unique()), dtype=object)
    n_test, n_cat = len(test_users), len(catalog)

    coverage = len(test_df) / float(n_test * n_cat)
    if coverage < coverage_threshold:
        raise DatasetError(
            f"{test_path}: covers {coverage:.4f} of the test grid, "
            f"need at least {coverage_threshold:.2f}"
        )

    user_pos = {u: i for i, u in enumerate(test_users)}
    item_pos = {v: i for i, v in enumerate(catalog)}
    rows = test_df["user_id"].map(user_pos).to_numpy(dtype=np.int64)
    cols = test_df["item_id"].map(item_pos).to_numpy(dtype=np.int64)
    cell_keys = rows * n_cat + cols
    if np.unique(cell_keys).size != cell_keys.size:
        dup = int(pd.Index(cell_keys).duplicated().argmax())
        raise DatasetError(
            f"{test_path}: line {dup + 2}: duplicate test cell "
            f"({test_df['user_id'].iloc[dup]}, {test_df['item_id'].iloc[dup]})"
        )
    relevance = np.zeros((n_test, n_cat), dtype=np.uint8)
    relevance[rows, cols] = test_df["label"].to_numpy()
    imputed = n_test * n_cat - len(test_df)
    if imputed:
        log.warning(
            "%s: %d missing test cells (%.2f%%) imputed as negative",
            test_path, imputed, 100.0 * imputed / (n_test * n_cat),
        )

    dropped = [u for i, u in enumerate(test_users) if relevance[i].sum() == 0]
    if dropped:
        log.warning("dropping %d test users with no positives", len(dropped))
        keep = np.array([u not in set(dropped) for u in test_users])
        test_users = test_users[keep]
        relevance = relevance[keep]
        n_test = len(test_users)
        if n_test == 0:
            raise DatasetError(f"{test_path}: every test user has zero positives")
        user_pos = {u: i for i, u in enumerate(test_users)}

    # Indexes: test users / catalog items first, train-only entries after.
    extra_users = sorted(set(train_df["user_id"]) - set(test_users))
    extra_items = sorted(set(train_df["item_id"]) - set(catalog))
    user_ids = np.concatenate([test_users, np.array(extra_users, dtype=object)])
    item_ids = np.concatenate([catalog, np.array(extra_items, dtype=object)])
    user_map = {u: i for i, u in enumerate(user_ids)}
    item_map = {v: i for i, v in enumerate(item_ids)}

    tl_users = train_df["user_id"].map(user_map).to_numpy(dtype=np.int64)
    tl_items = train_df["item_id"].map(item_map).to_numpy(dtype=np.int64)
    pair_keys = tl_users * len(item_ids) + tl_items
    if np.unique(pair_keys).size != pair_keys.size:
        dup = int(pd.Index(pair_keys).duplicated().argmax())
        raise DatasetError(
            f"{train_path}: line {dup + 2}: duplicate train pair "
            f"({train_df['user_id'].iloc[dup]}, {train_df['item_id'].iloc[dup]})"
        )
    weights = (
        train_df["weight"].to_numpy(dtype=np.float64)
        if "weight" in train_df.columns
        else None
    )
    train_log = TrainLog(
        users=tl_users,
        items=tl_items,
        labels=train_df["label"].to_numpy(dtype=np.uint8),
        weights=weights,
    )

    truth = GroundTruthMatrix(relevance=relevance)
    if holdout is None:
        holdout = make_holdout(truth, holdout_fraction, holdout_seed)
    provenance = {
        "source": "ingest",
        "test_path": os.path.abspath(test_path),
        "train_path": os.path.abspath(train_path),
        "coverage": coverage,
        "imputed_negative_cells": int(imputed),
        "imputed_as_negative": bool(imputed),
        "dropped_zero_positive_users": [str(u) for u in dropped[:20]],
        "dropped_zero_positive_count": len(dropped),
        "holdout_released_positive_cells": holdout.released_positive_cells,
    }
    bundle = DatasetBundle(
        user_ids=user_ids,
        item_ids=item_ids,
        n_test_users=n_test,
        n_catalog_items=n_cat,
        train_log=train_log,
        ground_truth=truth,
        holdout=holdout,
        provenance=provenance,
    )
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Canonical serialization
# ---------------------------------------------------------------------------

TRUTH_FILE = "truth.csv"
TRAIN_FILE = "train.csv"
HOLDOUT_FILE = "holdout.csv"
MANIFEST_FILE = "dataset.json"


def _write_lines(path: str, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line)
            fh.write("\n")


def save_bundle(bundle: DatasetBundle, out_dir: str) -> None:
    """Write the bundle as canonical CSV files plus a JSON manifest.

    Rows are sorted by (user position, item position); the ground truth is
    written densely so a save/load/save cycle is byte-identical.
    """
    os.makedirs(out_dir, exist_ok=True)
    uid, iid = bundle.user_ids, bundle.item_ids
    rel = bundle.ground_truth.relevance

    def truth_rows():
        yield "user_id,item_id,label"
        for u in range(bundle.n_test_users):
            row = rel[u]
            for i in range(bundle.n_catalog_items):
                yield f"{uid[u]},{iid[i]},{row[i]}"

    _write_lines(os.path.join(out_dir, TRUTH_FILE), truth_rows())

    tl = bundle.train_log
    order = np.lexsort((tl.items, tl.users))

    def train_rows():
        if tl.weights is None:
            yield "user_id,item_id,label"
            for idx in order:
                yield f"{uid[tl.users[idx]]},{iid[tl.items[idx]]},{tl.labels[idx]}"
        else:
            yield "user_id,item_id,label,weight"
            for idx in order:
                yield (
                    f"{uid[tl.users[idx]]},{iid[tl.items[idx]]},"
                    f"{tl.labels[idx]},{tl.weights[idx]!r}"
                )

    _write_lines(os.path.join(out_dir, TRAIN_FILE), train_rows())

    hrows, hcols = bundle.holdout.cells()

    def holdout_rows():
        yield "user_id,item_id"
        for r, c in zip(hrows, hcols):
            yield f"{uid[r]},{iid[c]}"

    _write_lines(os.path.join(out_dir, HOLDOUT_FILE), holdout_rows())

    manifest = {
        "format_version": FORMAT_VERSION,
        "n_test_users": bundle.n_test_users,
        "n_catalog_items": bundle.n_catalog_items,
        "n_users": bundle.n_users,
        "n_items": bundle.n_items,
        "holdout_fraction": bundle.holdout.fraction,
        "holdout_seed": bundle.holdout.seed,
        "provenance": bundle.provenance,
    }
    with open(os.path.join(out_dir, MANIFEST_FILE), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_bundle(in_dir: str) -> DatasetBundle:
    """Load a bundle previously written by :func:`save_bundle`."""
    manifest_path = os.path.join(in_dir, MANIFEST_FILE)
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DatasetError(f"{manifest_path}: missing dataset manifest") from exc
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"{manifest_path}: unsupported format version {manifest.get('format_version')}"
        )

    holdout_df = pd.read_csv(os.path.join(in_dir, HOLDOUT_FILE), dtype=str)
    bundle = ingest_fully_observed(
        os.path.join(in_dir, TRUTH_FILE),
        os.path.join(in_dir, TRAIN_FILE),
        holdout_fraction=manifest["holdout_fraction"],
        holdout_seed=manifest["holdout_seed"],
    )
    user_map = {u: i for i, u in enumerate(bundle.user_ids)}
    item_map = {v: i for i, v in enumerate(bundle.item_ids)}
    mask = np.zeros((bundle.n_test_users, bundle.n_catalog_items), dtype=bool)
    try:
        rows = holdout_df["user_id"].map(user_map).to_numpy(dtype=np.int64)
        cols = holdout_df["item_id"].map(item_map).to_numpy(dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise DatasetError(f"{HOLDOUT_FILE}: references unknown ids ({exc})") from exc
    mask[rows, cols] = True
    holdout = HoldoutPartition(
        mask=mask,
        fraction=manifest["holdout_fraction"],
        seed=manifest["holdout_seed"],
    )
    bundle = replace(bundle, holdout=holdout, provenance=manifest["provenance"])
    bundle.validate()
    return bundle


# ---------------------------------------------------------------------------
# Adapter for the fully observed video dataset layout
# ---------------------------------------------------------------------------


def convert_watch_log(
    dense_matrix_path: str,
    sparse_matrix_path: str,
    out_dir: str,
    *,
    user_column: str = "user_id",
    item_column: str = "video_id",
    watch_column: str = "play_duration",
    duration_column: str = "video_duration",
    ratio_column: str = "watch_ratio",
) -> tuple[str, str]:
    """Convert raw watch-log matrices into canonical test/train CSVs.

    Field mapping:

    * ``user_column`` / ``item_column``: opaque external ids.
    * ``watch_column``: time watched per row; multiple rows for the same
      (user, item) pair are summed into cumulative watch time.
    * ``duration_column``: item length in the same unit as the watch time.
    * ``ratio_column``: fallback when durations are absent; per-row ratios
      of watch time to duration are summed per pair.

    A pair is labeled positive when cumulative watch time strictly exceeds
    twice the item duration (equivalently, summed ratio > 2). The dense
    matrix (every user saw every item) becomes ``truth.csv``; the sparse
    matrix becomes ``train.csv``.
    """
    os.makedirs(out_dir, exist_ok=True)
    out_paths = []
    for src, dest in ((dense_matrix_path, TRUTH_FILE), (sparse_matrix_path, TRAIN_FILE)):
        header = pd.read_csv(src, nrows=0).columns
        for col in (user_column, item_column):
            if col not in header:
                raise DatasetError(f"{src}: missing column {col!r}")
        use_duration = watch_column in header and duration_column in header
        if not use_duration and ratio_column not in header:
            raise DatasetError(
                f"{src}: need either ({watch_column!r}, {duration_column!r}) "
                f"or {ratio_column!r}"
            )
        usecols = [user_column, item_column] + (
            [watch_column, duration_column] if use_duration else [ratio_column]
        )
        df = pd.read_csv(src, usecols=usecols, dtype={user_column: str, item_column: str})
        if use_duration:
            if (df[duration_column] <= 0).any():
                bad = int((df[duration_column] <= 0).to_numpy().argmax())
                raise DatasetError(f"{src}: line {bad + 2}: non-positive duration")
            grouped = df.groupby([user_column, item_column], sort=True).agg(
                watched=(watch_column, "sum"), duration=(duration_column, "first")
            )
            labels = (grouped["watched"] > 2.0 * grouped["duration"]).astype(np.uint8)
        else:
            summed = df.groupby([user_column, item_column], sort=True)[ratio_column].sum()
            labels = (summed > 2.0).astype(np.uint8)
        out = labels.reset_index()
        out.columns = ["user_id", "item_id", "label"]
        path = os.path.join(out_dir, dest)
        out.to_csv(path, index=False, lineterminator="\n")
        out_paths.append(path)
        log.info(
            "%s -> %s: %d users, %d items, %d positive / %d negative",
            src, dest, out["user_id"].nunique(), out["item_id"].nunique(),
            int((out["label"] == 1).sum()), int((out["label"] == 0).sum()),
        )
    return out_paths[0], out_paths[1]
