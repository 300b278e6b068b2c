import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampleval.rng import derive_key, derive_rng, derive_seed, weighted_sample_without_replacement


def test_same_tags_same_stream():
    a = derive_rng("x", 1, 2.5, "u").random(8)
    b = derive_rng("x", 1, 2.5, "u").random(8)
    np.testing.assert_array_equal(a, b)


def test_different_tags_different_streams():
    a = derive_rng("x", 1).random(8)
    b = derive_rng("x", 2).random(8)
    assert not np.array_equal(a, b)


def test_tag_boundaries_matter():
    # ("ab", "c") and ("a", "bc") must not collide.
    assert derive_key("ab", "c") != derive_key("a", "bc")


def test_float_tags_are_exact():
    assert derive_key(0.1) != derive_key(0.1 + 2**-54)
    assert derive_seed(1) != derive_seed(1.0)  # int and float encode differently


def test_rejects_unhashable_tag_types():
    with pytest.raises(TypeError):
        derive_key(["list"])


def test_derive_seed_is_64_bit_int():
    s = derive_seed("anything")
    assert isinstance(s, int) and 0 <= s < 2**64


def test_single_draw_matches_weights():
    w = np.array([0.5, 0.3, 0.2])
    rng = derive_rng("test-single")
    counts = np.zeros(3)
    n = 20000
    for _ in range(n):
        counts[weighted_sample_without_replacement(w, 1, rng)[0]] += 1
    assert np.abs(counts / n - w).max() < 0.015


def test_draw_everything_returns_all_indices():
    w = np.array([1.0, 2.0, 3.0, 4.0])
    out = weighted_sample_without_replacement(w, 4, derive_rng("t"))
    np.testing.assert_array_equal(out, [0, 1, 2, 3])


def test_oversized_k_is_capped_at_positive_support():
    w = np.array([1.0, 0.0, 2.0])
    out = weighted_sample_without_replacement(w, 10, derive_rng("t"))
    np.testing.assert_array_equal(out, [0, 2])


def test_zero_weight_never_selected():
    w = np.array([1.0, 0.0, 1.0, 0.0])
    rng = derive_rng("zero")
    for _ in range(200):
        out = weighted_sample_without_replacement(w, 2, rng)
        assert 1 not in out and 3 not in out


def test_negative_weight_rejected():
    with pytest.raises(ValueError):
        weighted_sample_without_replacement(np.array([1.0, -0.1]), 1, derive_rng("t"))


def test_k_zero_gives_empty():
    out = weighted_sample_without_replacement(np.array([1.0, 1.0]), 0, derive_rng("t"))
    assert out.size == 0 and out.dtype == np.int64


@settings(max_examples=60, deadline=None)
@given(
    weights=st.lists(st.floats(min_value=0.0, max_value=100.0), min_size=1, max_size=40),
    k=st.integers(min_value=0, max_value=50),
    seed=st.integers(min_value=0, max_value=2**32),
)
def test_sample_invariants(weights, k, seed):
    w = np.asarray(weights)
    out = weighted_sample_without_replacement(w, k, derive_rng("hyp", seed))
    assert out.size == min(k, int((w > 0).sum()))
    assert np.unique(out).size == out.size  # no repeats
    assert np.all(np.diff(out) > 0)  # sorted ascending
    if out.size:
        assert w[out].min() > 0
