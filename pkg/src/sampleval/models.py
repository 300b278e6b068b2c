"""Recommender model zoo trained on the interaction log.

Six scorer families: global popularity, seeded random, item-item
co-occurrence with cosine or Jaccard similarity, implicit-confidence
alternating least squares, and Bayesian personalized ranking. Every
scorer is a pure function after fitting: repeated score calls agree
bitwise, and scores depend only on (user, item), never on the candidate
set they appear in.

Cold users and items (no positive training interactions) score exactly
0. For the factor models, trained scores are shifted by a constant fixed
at fit time so every trained (user, item) score is strictly positive;
cold scores therefore sort below all trained scores.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .dataset import TrainLog
from .evaluation import metric_at_k, rank_candidates
from .rng import derive_rng, derive_seed, weighted_sample_without_replacement

log = logging.getLogger(__name__)

MODEL_FAMILIES = ("popularity", "random", "sar_cosine", "sar_jaccard", "als", "bpr")
SCORER_FORMAT_VERSION = 1


class ModelError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Scorer base
# ---------------------------------------------------------------------------


class Scorer:
    """Base contract: fit on a train log, then score (user, item) pairs."""

    family = "base"

    def __init__(self, name: str | None = None, **params):
        self.name = name or self.family
        self.params = dict(params)
        self.fitted = False
        self.n_users = 0
        self.n_items = 0

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "Scorer":
        raise NotImplementedError

    def scores_for(self, users: np.ndarray) -> np.ndarray:
        """Dense score rows, shape (len(users), n_items)."""
        raise NotImplementedError

    def score(self, user: int, items: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return self.scores_for(np.asarray([user]))[0, np.asarray(items)]

    def state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def _restore(self, arrays: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def _check_fitted(self) -> None:
        if not self.fitted:
            raise ModelError(f"scorer {self.name!r} is not fitted")


class PopularityScorer(Scorer):
    """Ranks items by train-log interaction count, identically for all users."""

    family = "popularity"

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "PopularityScorer":
        self.n_users, self.n_items = n_users, n_items
        self._counts = train.item_interaction_counts(n_items).astype(np.float64)
        self.fitted = True
        return self

    def scores_for(self, users: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return np.tile(self._counts, (np.asarray(users).shape[0], 1))

    def state(self) -> dict[str, np.ndarray]:
        return {"counts": self._counts}

    def _restore(self, arrays: dict[str, np.ndarray]) -> None:
        self._counts = arrays["counts"]


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


class RandomScorer(Scorer):
    """Deterministic pseudo-random scores: hash of (seed, user, item) in (0,1)."""

    family = "random"

    def __init__(self, name: str | None = None, seed: int = 0):
        super().__init__(name, seed=seed)

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "RandomScorer":
        self.n_users, self.n_items = n_users, n_items
        self.fitted = True
        return self

    def scores_for(self, users: np.ndarray) -> np.ndarray:
        self._check_fitted()
        u = np.asarray(users, dtype=np.uint64).reshape(-1, 1)
        i = np.arange(self.n_items, dtype=np.uint64).reshape(1, -1)
        golden = np.uint64(0x9E3779B97F4A7C15)
        base = np.uint64(int(self.params["seed"]) & 0xFFFFFFFFFFFFFFFF)
        with np.errstate(over="ignore"):
            h = _mix64(base + golden * (u + np.uint64(1)))
            h = _mix64(h + golden * (i + np.uint64(1)))
        return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53

    def state(self) -> dict[str, np.ndarray]:
        return {}

    def _restore(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class SarScorer(Scorer):
    """Item co-occurrence scorer over positive interactions.

    sim(i, j) = C_ij / sqrt(C_ii * C_jj) (cosine) or
    C_ij / (C_ii + C_jj - C_ij) (jaccard); score(u, i) sums sim(j, i)
    over the user's positive training items.
    """

    family = "sar"

    def __init__(self, name: str | None = None, similarity: str = "cosine"):
        if similarity not in ("cosine", "jaccard"):
            raise ModelError(f"unknown similarity {similarity!r}")
        super().__init__(name or f"sar_{similarity}", similarity=similarity)

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "SarScorer":
        self.n_users, self.n_items = n_users, n_items
        pu, pi, _ = train.positive_triples()
        if pu.size == 0:
            raise ModelError("co-occurrence needs at least one positive interaction")
        ones = np.ones(pu.shape[0], dtype=np.float64)
        self._liked = sp.csr_matrix((ones, (pu, pi)), shape=(n_users, n_items))
        cooc = (self._liked.T @ self._liked).tocoo()
        diag = np.zeros(n_items, dtype=np.float64)
        on_diag = cooc.row == cooc.col
        diag[cooc.row[on_diag]] = cooc.data[on_diag]
        if self.params["similarity"] == "cosine":
            vals = cooc.data / np.sqrt(diag[cooc.row] * diag[cooc.col])
        else:
            vals = cooc.data / (diag[cooc.row] + diag[cooc.col] - cooc.data)
        self._sim = sp.csr_matrix((vals, (cooc.row, cooc.col)), shape=(n_items, n_items))
        self.fitted = True
        return self

    def scores_for(self, users: np.ndarray) -> np.ndarray:
        self._check_fitted()
        return np.asarray((self._liked[np.asarray(users)] @ self._sim).todense())

    def state(self) -> dict[str, np.ndarray]:
        return {
            "liked_indptr": self._liked.indptr.astype(np.int64),
            "liked_indices": self._liked.indices.astype(np.int64),
            "sim_indptr": self._sim.indptr.astype(np.int64),
            "sim_indices": self._sim.indices.astype(np.int64),
            "sim_data": self._sim.data.astype(np.float64),
        }

    def _restore(self, arrays: dict[str, np.ndarray]) -> None:
        n_u, n_i = self.n_users, self.n_items
        liked_data = np.ones(arrays["liked_indices"].shape[0], dtype=np.float64)
        self._liked = sp.csr_matrix(
            (liked_data, arrays["liked_indices"], arrays["liked_indptr"]), shape=(n_u, n_i)
        )
        self._sim = sp.csr_matrix(
            (arrays["sim_data"], arrays["sim_indices"], arrays["sim_indptr"]), shape=(n_i, n_i)
        )


def _factor_shift(
    x: np.ndarray, y: np.ndarray, user_trained: np.ndarray, item_trained: np.ndarray
) -> float:
    """Constant making every trained (user, item) inner product positive.

    Computed in row chunks so the full score matrix is never materialized.
    """
    if not user_trained.any() or not item_trained.any():
        return 0.0
    yt = y[item_trained]
    lowest = np.inf
    rows = np.flatnonzero(user_trained)
    for start in range(0, rows.shape[0], 256):
        block = x[rows[start : start + 256]] @ yt.T
        lowest = min(lowest, float(block.min()))
    return 1.0 - lowest if lowest <= 0.0 else 0.0


class _FactorScorer(Scorer):
    """Shared scoring for latent-factor models (ALS, BPR)."""

    def scores_for(self, users: np.ndarray) -> np.ndarray:
        self._check_fitted()
        users = np.asarray(users)
        scores = self._x[users] @ self._y.T
        trained = self._user_trained[users][:, None] & self._item_trained[None, :]
        scores[~trained] = 0.0
        scores[trained] += self._shift
        return scores

    def state(self) -> dict[str, np.ndarray]:
        return {
            "x": self._x,
            "y": self._y,
            "user_trained": self._user_trained.astype(np.uint8),
            "item_trained": self._item_trained.astype(np.uint8),
            "shift": np.asarray([self._shift], dtype=np.float64),
            "objective": np.asarray(self._objective_history, dtype=np.float64),
        }

    def _restore(self, arrays: dict[str, np.ndarray]) -> None:
        self._x = arrays["x"]
        self._y = arrays["y"]
        self._user_trained = arrays["user_trained"].astype(bool)
        self._item_trained = arrays["item_trained"].astype(bool)
        self._shift = float(arrays["shift"][0])
        self._objective_history = arrays["objective"].tolist()

    def _finalize(self, pu: np.ndarray, pi: np.ndarray) -> None:
        self._user_trained = np.zeros(self.n_users, dtype=bool)
        self._item_trained = np.zeros(self.n_items, dtype=bool)
        self._user_trained[pu] = True
        self._item_trained[pi] = True
        self._x[~self._user_trained] = 0.0
        self._y[~self._item_trained] = 0.0
        self._shift = _factor_shift(self._x, self._y, self._user_trained, self._item_trained)


class AlsScorer(_FactorScorer):
    """Implicit-feedback alternating least squares.

    Confidence c_ui = 1 + confidence_alpha * r_ui on observed positives
    (r from the log's engagement weight, else 1) and 1 elsewhere;
    preference is 1 on positives, 0 elsewhere. Each sweep solves exact
    ridge systems for users then items, so the weighted squared-error
    objective is non-increasing across sweeps (tracked and exposed).
    """

    family = "als"

    def __init__(
        self,
        name: str | None = None,
        latent_dim: int = 16,
        regularization: float = 0.1,
        confidence_alpha: float = 10.0,
        iterations: int = 10,
        seed: int = 0,
    ):
        if latent_dim < 1 or iterations < 1:
            raise ModelError("latent_dim and iterations must be >= 1")
        if regularization < 0 or confidence_alpha < 0:
            raise ModelError("regularization and confidence_alpha must be >= 0")
        super().__init__(
            name,
            latent_dim=latent_dim,
            regularization=regularization,
            confidence_alpha=confidence_alpha,
            iterations=iterations,
            seed=seed,
        )

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "AlsScorer":
        self.n_users, self.n_items = n_users, n_items
        dim = int(self.params["latent_dim"])
        reg = float(self.params["regularization"])
        alpha = float(self.params["confidence_alpha"])
        pu, pi, pw = train.positive_triples()
        if pu.size == 0:
            raise ModelError("factorization needs at least one positive interaction")
        rating = pw.astype(np.float64) if pw is not None else np.ones(pu.shape[0])
        conf = 1.0 + alpha * rating

        rng = derive_rng("als-init", self.params["seed"])
        self._x = 0.01 * rng.standard_normal((n_users, dim))
        self._y = 0.01 * rng.standard_normal((n_items, dim))

        by_user = sp.csr_matrix((conf, (pu, pi)), shape=(n_users, n_items))
        by_item = by_user.T.tocsr()
        self._objective_history = [self._objective(pu, pi, conf, reg)]
        for _ in range(int(self.params["iterations"])):
            self._solve_side(self._x, self._y, by_user, reg)
            self._solve_side(self._y, self._x, by_item, reg)
            self._objective_history.append(self._objective(pu, pi, conf, reg))
        if not np.isfinite(self._objective_history[-1]):
            raise ModelError("training diverged: objective is not finite")
        self._finalize(pu, pi)
        self.fitted = True
        return self

    def _solve_side(
        self, target: np.ndarray, other: np.ndarray, conf_csr: sp.csr_matrix, reg: float
    ) -> None:
        dim = other.shape[1]
        gram = other.T @ other + reg * np.eye(dim)
        for row in range(target.shape[0]):
            lo, hi = conf_csr.indptr[row], conf_csr.indptr[row + 1]
            if lo == hi:
                target[row] = 0.0
                continue
            idx = conf_csr.indices[lo:hi]
            c = conf_csr.data[lo:hi]
            factors = other[idx]
            a = gram + (factors.T * (c - 1.0)) @ factors
            b = factors.T @ c
            try:
                target[row] = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                log.warning("singular normal equations; applying 1e-8 ridge floor")
                target[row] = np.linalg.solve(a + 1e-8 * np.eye(dim), b)

    def _objective(
        self, pu: np.ndarray, pi: np.ndarray, conf: np.ndarray, reg: float
    ) -> float:
        # sum over all cells of (x.y)^2 equals the elementwise product of
        # the two Gram matrices; observed cells swap in c(1 - x.y)^2.
        gram_term = float((self._x.T @ self._x * (self._y.T @ self._y)).sum())
        s = (self._x[pu] * self._y[pi]).sum(axis=1)
        pos_term = float((conf * (1.0 - s) ** 2 - s**2).sum())
        reg_term = reg * float((self._x**2).sum() + (self._y**2).sum())
        return gram_term + pos_term + reg_term

    @property
    def objective_history(self) -> list[float]:
        return list(self._objective_history)


def bpr_triple_loss(
    x_u: np.ndarray, y_i: np.ndarray, y_j: np.ndarray, regularization: float
) -> float:
    """Pairwise loss for one (user, positive, negative) triple."""
    margin = float(x_u @ (y_i - y_j))
    penalty = float(x_u @ x_u + y_i @ y_i + y_j @ y_j)
    return float(np.logaddexp(0.0, -margin)) + 0.5 * regularization * penalty


def bpr_triple_grads(
    x_u: np.ndarray, y_i: np.ndarray, y_j: np.ndarray, regularization: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of :func:`bpr_triple_loss` w.r.t. the three vectors."""
    margin = float(x_u @ (y_i - y_j))
    slope = -float(expit(-margin))
    return (
        slope * (y_i - y_j) + regularization * x_u,
        slope * x_u + regularization * y_i,
        -slope * x_u + regularization * y_j,
    )


class BprScorer(_FactorScorer):
    """Bayesian personalized ranking via sequential stochastic updates.

    Each epoch shuffles the positive triples with an epoch-derived seed
    and, per positive, draws negatives uniformly (rejecting the user's
    positives) for pairwise sigmoid updates. Sequential single-threaded
    execution keeps training exactly reproducible.
    """

    family = "bpr"

    def __init__(
        self,
        name: str | None = None,
        latent_dim: int = 16,
        learning_rate: float = 0.05,
        regularization: float = 0.01,
        epochs: int = 15,
        negatives_per_positive: int = 1,
        seed: int = 0,
    ):
        if latent_dim < 1 or negatives_per_positive < 1:
            raise ModelError("latent_dim and negatives_per_positive must be >= 1")
        if epochs < 0:
            raise ModelError("epochs must be >= 0")
        if learning_rate <= 0 or regularization < 0:
            raise ModelError("learning_rate must be > 0 and regularization >= 0")
        super().__init__(
            name,
            latent_dim=latent_dim,
            learning_rate=learning_rate,
            regularization=regularization,
            epochs=epochs,
            negatives_per_positive=negatives_per_positive,
            seed=seed,
        )

    def fit(self, train: TrainLog, n_users: int, n_items: int) -> "BprScorer":
        self.n_users, self.n_items = n_users, n_items
        dim = int(self.params["latent_dim"])
        lr = float(self.params["learning_rate"])
        reg = float(self.params["regularization"])
        npp = int(self.params["negatives_per_positive"])
        pu, pi, _ = train.positive_triples()
        if pu.size == 0:
            raise ModelError("factorization needs at least one positive interaction")
        pos_sets = [set() for _ in range(n_users)]
        for u, i in zip(pu.tolist(), pi.tolist()):
            pos_sets[u].add(i)

        rng = derive_rng("bpr-init", self.params["seed"])
        self._x = 0.1 * rng.standard_normal((n_users, dim))
        self._y = 0.1 * rng.standard_normal((n_items, dim))
        x, y = self._x, self._y
        self._objective_history = []
        for epoch in range(int(self.params["epochs"])):
            erng = derive_rng("bpr-epoch", self.params["seed"], epoch)
            order = erng.permutation(pu.shape[0])
            epoch_loss = 0.0
            steps = 0
            for t in order.tolist():
                u, i = int(pu[t]), int(pi[t])
                forbidden = pos_sets[u]
                for _ in range(npp):
                    j = int(erng.integers(0, n_items))
                    tries = 0
                    while j in forbidden and tries < 1000:
                        j = int(erng.integers(0, n_items))
                        tries += 1
                    if j in forbidden:  # user positive on nearly every item
                        continue
                    epoch_loss += bpr_triple_loss(x[u], y[i], y[j], reg)
                    g_u, g_i, g_j = bpr_triple_grads(x[u], y[i], y[j], reg)
                    x[u] -= lr * g_u
                    y[i] -= lr * g_i
                    y[j] -= lr * g_j
                    steps += 1
            mean_loss = epoch_loss / steps if steps else float("nan")
            self._objective_history.append(mean_loss)
            if not (np.isfinite(x).all() and np.isfinite(y).all()):
                raise ModelError(
                    f"training diverged at epoch {epoch}: non-finite factors "
                    f"(mean triple loss {mean_loss!r}); lower the learning rate"
                )
        self._finalize(pu, pi)
        self.fitted = True
        return self

    @property
    def objective_history(self) -> list[float]:
        return list(self._objective_history)


# ---------------------------------------------------------------------------
# Registry and serialization
# ---------------------------------------------------------------------------


def build_scorer(family: str, params: dict | None = None, name: str | None = None) -> Scorer:
    params = dict(params or {})
    if family == "popularity":
        scorer = PopularityScorer(name)
    elif family == "random":
        scorer = RandomScorer(name, **params)
    elif family == "sar_cosine":
        scorer = SarScorer(name or "sar_cosine", similarity="cosine")
    elif family == "sar_jaccard":
        scorer = SarScorer(name or "sar_jaccard", similarity="jaccard")
    elif family == "als":
        scorer = AlsScorer(name, **params)
    elif family == "bpr":
        scorer = BprScorer(name, **params)
    else:
        raise ModelError(f"unknown model family {family!r}")
    scorer.family_requested = family
    return scorer


_DTYPE_CODES = {"<f8": np.dtype("<f8"), "<i8": np.dtype("<i8"), "|u1": np.dtype("|u1")}


def save_scorer(scorer: Scorer, path: str) -> None:
    """Write a fitted scorer: one JSON header line + flat little-endian arrays."""
    scorer._check_fitted()
    arrays = scorer.state()
    manifest = []
    blobs = []
    for key in sorted(arrays):
        arr = np.ascontiguousarray(arrays[key])
        if arr.dtype == np.uint8:
            code = "|u1"
        elif np.issubdtype(arr.dtype, np.integer):
            code = "<i8"
        else:
            code = "<f8"
        arr = arr.astype(_DTYPE_CODES[code])
        manifest.append({"name": key, "dtype": code, "shape": list(arr.shape)})
        blobs.append(arr.tobytes(order="C"))
    header = {
        "format_version": SCORER_FORMAT_VERSION,
        "family": getattr(scorer, "family_requested", scorer.family),
        "name": scorer.name,
        "params": {k: (v.item() if hasattr(v, "item") else v) for k, v in scorer.params.items()},
        "n_users": scorer.n_users,
        "n_items": scorer.n_items,
        "arrays": manifest,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for blob in blobs:
            fh.write(blob)


def load_scorer(path: str) -> Scorer:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format_version") != SCORER_FORMAT_VERSION:
            raise ModelError(f"unsupported scorer format in {path}")
        scorer = build_scorer(header["family"], header["params"], header["name"])
        scorer.n_users = int(header["n_users"])
        scorer.n_items = int(header["n_items"])
        arrays = {}
        for spec in header["arrays"]:
            dtype = _DTYPE_CODES[spec["dtype"]]
            count = int(np.prod(spec["shape"])) if spec["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[spec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(spec["shape"]).copy()
        scorer._restore(arrays)
        scorer.fitted = True
        return scorer


# ---------------------------------------------------------------------------
# Hyperparameter search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogUniform:
    low: float
    high: float

    def __post_init__(self):
        if not 0 < self.low < self.high:
            raise ModelError("log-uniform range needs 0 < low < high")

    def sample(self, rng: np.random.Generator):
        return float(np.exp(rng.uniform(np.log(self.low), np.log(self.high))))


@dataclass(frozen=True)
class Choice:
    options: tuple

    def __post_init__(self):
        if not self.options:
            raise ModelError("choice needs at least one option")

    def sample(self, rng: np.random.Generator):
        return self.options[int(rng.integers(0, len(self.options)))]


@dataclass(frozen=True)
class HyperparamSpace:
    """Named parameter ranges plus search budget (iterations) and CV folds."""

    ranges: dict
    iterations: int = 16
    folds: int = 5

    def validate(self) -> None:
        if not self.ranges:
            raise ModelError("hyperparameter space has no ranges")
        if self.iterations < 1 or self.folds < 2:
            raise ModelError("need iterations >= 1 and folds >= 2")


DEFAULT_SPACES = {
    "als": HyperparamSpace(
        ranges={
            "latent_dim": Choice((8, 16, 32, 64)),
            "regularization": LogUniform(1e-3, 1e1),
            "confidence_alpha": LogUniform(1.0, 100.0),
            "iterations": Choice((10, 15)),
        }
    ),
    "bpr": HyperparamSpace(
        ranges={
            "latent_dim": Choice((8, 16, 32, 64)),
            "learning_rate": LogUniform(1e-3, 1e-1),
            "regularization": LogUniform(1e-5, 1e-1),
            "epochs": Choice((10, 20)),
        }
    ),
}


def _cv_ndcg(
    family: str,
    params: dict,
    train: TrainLog,
    n_users: int,
    n_items: int,
    fold_of_positive: np.ndarray,
    fold: int,
    seed: int,
    k: int = 100,
    n_negatives: int = 100,
) -> float:
    """Mean validation nDCG@k for one fold: held-out positives vs uniform negatives."""
    pos_mask = train.labels == 1
    pos_idx = np.flatnonzero(pos_mask)
    held = pos_idx[fold_of_positive == fold]
    keep = np.ones(len(train), dtype=bool)
    keep[held] = False
    reduced = TrainLog(
        users=train.users[keep],
        items=train.items[keep],
        labels=train.labels[keep],
        weights=train.weights[keep] if train.weights is not None else None,
    )
    if (reduced.labels == 1).sum() == 0:
        raise ModelError("fold removed every positive; use fewer folds")
    scorer = build_scorer(family, {**params, "seed": derive_seed("cv-fit", seed, fold)})
    scorer.fit(reduced, n_users, n_items)

    held_users = train.users[held]
    held_items = train.items[held]
    full_pos = {u: set() for u in np.unique(held_users).tolist()}
    for u, i in zip(train.users[pos_mask].tolist(), train.items[pos_mask].tolist()):
        if u in full_pos:
            full_pos[u].add(i)
    values = []
    for u in sorted(full_pos):
        hp = np.sort(held_items[held_users == u])
        allowed = np.setdiff1d(np.arange(n_items), np.fromiter(full_pos[u], dtype=np.int64))
        if allowed.size == 0:
            continue
        nrng = derive_rng("cv-negatives", seed, fold, u)
        take = weighted_sample_without_replacement(
            np.ones(allowed.size), min(n_negatives, allowed.size), nrng
        )
        candidates = np.sort(np.concatenate([hp, allowed[take]]))
        relevance = np.isin(candidates, hp, assume_unique=True)
        scores = scorer.scores_for(np.asarray([u]))[0, candidates]
        order = rank_candidates(scores, derive_rng("cv-rank", seed, fold, u))
        values.append(metric_at_k("ndcg", relevance[order], hp.size, k))
    if not values:
        raise ModelError("fold produced no validation users")
    return float(np.mean(values))


def random_search(
    family: str,
    space: HyperparamSpace,
    train: TrainLog,
    n_users: int,
    n_items: int,
    seed: int = 0,
) -> tuple[dict, list[dict]]:
    """Pick hyperparameters by randomized search with positive-fold CV.

    Draws ``space.iterations`` configurations, scores each by mean
    validation nDCG@100 across folds (each fold's positives held out and
    ranked against fold-local uniform negatives), and returns the argmax;
    ties keep the earliest draw. Configurations that fail to train score
    -inf and are recorded. Returns (best params, full history).
    """
    space.validate()
    rng = derive_rng("search", seed, family)
    draws = []
    for _ in range(space.iterations):
        params = {}
        for key in sorted(space.ranges):
            rule = space.ranges[key]
            params[key] = rule.sample(rng) if hasattr(rule, "sample") else rule
        draws.append(params)

    n_pos = int((train.labels == 1).sum())
    frng = derive_rng("cv-split", seed)
    fold_of_positive = frng.permutation(n_pos) % space.folds

    history = []
    best_idx, best_score = 0, -np.inf
    for t, params in enumerate(draws):
        fold_scores = []
        try:
            for fold in range(space.folds):
                fold_scores.append(
                    _cv_ndcg(family, params, train, n_users, n_items, fold_of_positive, fold, seed)
                )
            score = float(np.mean(fold_scores))
        except (ModelError, np.linalg.LinAlgError) as exc:
            log.warning("search draw %d failed (%s); scoring -inf", t, exc)
            score = -np.inf
        history.append({"params": params, "score": score})
        if score > best_score:
            best_idx, best_score = t, score
    return draws[best_idx], history
