import numpy as np
from hypothesis import given, strategies as st
from scipy import stats

from fedkern import _streams


def test_hash_is_deterministic_and_vectorized():
    its = np.arange(100)
    a = _streams.hash64(7, its)
    assert a.dtype == np.uint64
    assert np.array_equal(a, _streams.hash64(7, its))
    assert a[13] == _streams.hash64(7, 13)


def test_keys_and_counters_separate_streams():
    its = np.arange(1000)
    assert not np.array_equal(_streams.hash64(1, its), _streams.hash64(2, its))
    assert not np.array_equal(_streams.hash64(1, its, 0), _streams.hash64(1, its, 1))
    assert len(np.unique(_streams.hash64(3, its))) == len(its)


@given(st.integers(min_value=-(2**70), max_value=2**70))
def test_uniform_in_open_interval(key):
    u = _streams.uniform(key, np.arange(64))
    assert np.all((u > 0) & (u < 1))


def test_uniform_passes_ks():
    u = _streams.uniform(_streams.derive_key(0, _streams.MASK), np.arange(20000))
    assert stats.kstest(u, "uniform").pvalue > 0.001


def test_negative_counters_are_hashed_not_rejected():
    assert _streams.hash64(0, -1) != _streams.hash64(0, 1)
