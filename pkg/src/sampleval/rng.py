"""Derived random number generators and weighted sampling primitives.

Every random decision in this package is made by a generator derived from
a tuple of tags (master seed, scenario key, user id, purpose string, ...).
Tags are hashed into a Philox key, so any component can be recomputed in
isolation, in any order, on any worker, and produce identical draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

_SEP = b"\x1f"


def _encode_tag(tag) -> bytes:
    if isinstance(tag, bytes):
        return tag
    if isinstance(tag, str):
        return tag.encode("utf-8")
    if isinstance(tag, (bool, np.bool_)):
        return b"t" if tag else b"f"
    if isinstance(tag, (int, np.integer)):
        return str(int(tag)).encode("ascii")
    if isinstance(tag, (float, np.floating)):
        # repr round-trips IEEE doubles, so the encoding is exact.
        return repr(float(tag)).encode("ascii")
    if tag is None:
        return b"\x00none"
    raise TypeError(f"cannot use {type(tag).__name__} as an rng tag")


def derive_key(*tags) -> bytes:
    """Hash a tag tuple into 32 stable bytes."""
    h = hashlib.sha256()
    for tag in tags:
        h.update(_encode_tag(tag))
        h.update(_SEP)
    return h.digest()


def derive_seed(*tags) -> int:
    """Derive a 64-bit integer seed from a tag tuple."""
    return int.from_bytes(derive_key(*tags)[:8], "little")


def derive_rng(*tags) -> np.random.Generator:
    """Derive an independent counter-based generator from a tag tuple."""
    key = np.frombuffer(derive_key(*tags)[:16], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def weighted_sample_without_replacement(
    weights: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``k`` distinct indices with probability proportional to weight.

    Uses exponentiated uniform keys (``U ** (1/w)``, compared in log space):
    the top-k keys are a weighted sample without replacement, and a single
    draw lands on index ``i`` with probability ``w[i] / sum(w)``.

    Zero-weight entries are never selected. If fewer than ``k`` entries
    have positive weight, all of them are returned. Indices come back
    sorted ascending; selection, not order, carries the randomness.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weights must be one-dimensional")
    if k < 0:
        raise ValueError("sample size must be non-negative")
    if w.size and float(w.min()) < 0.0:
        raise ValueError("weights must be non-negative")
    pos_idx = np.flatnonzero(w > 0)
    k = min(k, pos_idx.size)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    # One uniform per input entry keeps the stream advance independent of
    # the weights' support, so masking cannot shift later draws.
    u = rng.random(w.shape[0])[pos_idx]
    np.maximum(u, 5e-324, out=u)  # keep log(u) finite
    with np.errstate(over="ignore"):  # log(u)/w -> -inf as w -> 0, the right limit
        keys = np.log(u) / w[pos_idx]
    if k == pos_idx.size:
        selected = pos_idx
    else:
        selected = pos_idx[np.argpartition(keys, keys.size - k)[keys.size - k :]]
    return np.sort(selected.astype(np.int64))
