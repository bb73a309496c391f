import numpy as np
import pytest

from uae.rng import Rng


def test_same_seed_same_stream():
    a, b = Rng(7), Rng(7)
    np.testing.assert_array_equal(a.normal(101), b.normal(101))
    np.testing.assert_array_equal(a.uniform(5), b.uniform(5))


def test_streams_differ():
    assert not np.array_equal(Rng(7, 0).raw(8), Rng(7, 1).raw(8))
    assert not np.array_equal(Rng(7).raw(8), Rng(8).raw(8))


def test_buffering_does_not_change_stream():
    a, b = Rng(3), Rng(3)
    whole = a.raw(10000)
    parts = np.concatenate([b.raw(k) for k in (1, 4095, 3, 5901)])
    np.testing.assert_array_equal(whole, parts)


def test_box_muller_matches_documented_recipe():
    words = Rng(11).raw(4)
    w = words >> np.uint64(11)
    u1 = (w[0::2].astype(float) + 1.0) / 2.0**53
    u2 = w[1::2].astype(float) / 2.0**53
    r = np.sqrt(-2.0 * np.log(u1))
    expected = np.empty(4)
    expected[0::2] = r * np.cos(2 * np.pi * u2)
    expected[1::2] = r * np.sin(2 * np.pi * u2)
    np.testing.assert_array_equal(Rng(11).normal(4), expected)


def test_odd_request_discards_partner():
    a, b = Rng(5), Rng(5)
    first = a.normal(3)
    np.testing.assert_array_equal(first, b.normal(4)[:3])
    # both consumed 4 words
    np.testing.assert_array_equal(a.raw(2), b.raw(2))


def test_moments():
    z = Rng(0).normal(200000)
    assert abs(z.mean()) < 3 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    u = Rng(0).uniform(200000)
    assert 0 <= u.min() and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005


def test_permutation_is_a_permutation():
    p = Rng(2).permutation(1000)
    np.testing.assert_array_equal(np.sort(p), np.arange(1000))


@pytest.mark.parametrize("high", [1, 2, 7])
def test_integers_range(high):
    v = Rng(9).integers(high, (1000,))
    assert v.min() >= 0 and v.max() < high
    assert isinstance(Rng(9).integers(high), int)
