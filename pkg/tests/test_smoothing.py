import numpy as np
import pytest
from hypothesis import given, strategies as st

from kbkssd.core import TimeSeries
from kbkssd.smoothing import smooth


def percentile(values, pct):
    s = sorted(values)
    rank = pct / 100 * (len(s) - 1)
    lo = int(rank)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (rank - lo) * (s[hi] - s[lo])


def median(values):
    s = sorted(values)
    n = len(s)
    return s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2


def oracle(values, win, lo, hi):
    out = list(values)
    replaced = []
    for start in range(0, len(values), win):
        block = values[start:start + win]
        if len(block) < 3:
            continue
        a, b, m = percentile(block, lo), percentile(block, hi), median(block)
        for i, v in enumerate(block):
            if v < a or v > b:
                out[start + i] = m
                replaced.append(start + i)
    return out, replaced


def test_constant_block_untouched():
    s, rep = smooth(TimeSeries("c", [3, 3, 3, 3, 3]), 5, 5, 95)
    assert s.samples.tolist() == [3] * 5
    assert rep.replaced_indices == [] and rep.subset_count == 1


def test_single_spike_replaced():
    assert percentile([1, 1, 1, 1, 100], 95) == pytest.approx(80.2)
    s, rep = smooth(TimeSeries("c", [1, 1, 1, 1, 100]), 5, 5, 95)
    assert s.samples.tolist() == [1, 1, 1, 1, 1]
    assert rep.replaced_indices == [4]


def test_two_blocks():
    assert percentile([1, 2, 3], 5) == pytest.approx(1.1)
    assert percentile([1, 2, 3], 95) == pytest.approx(2.9)
    s, rep = smooth(TimeSeries("c", [1, 2, 3, 4, 5, 6]), 3, 5, 95)
    assert s.samples.tolist() == [2, 2, 2, 5, 5, 5]
    assert rep.replaced_indices == [0, 2, 3, 5]
    assert rep.subset_count == 2


def test_short_trailing_block_left_alone():
    s, rep = smooth(TimeSeries("c", [1, 2, 3, 9, 1]), 3, 5, 95)
    assert s.samples.tolist()[3:] == [9, 1]
    assert all(i < 3 for i in rep.replaced_indices)


floats = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.lists(floats, min_size=1, max_size=120), st.integers(1, 40),
       st.sampled_from([(5, 95), (10, 90), (1, 99), (25, 75)]))
def test_matches_oracle_and_properties(values, win, pct):
    s, rep = smooth(TimeSeries("h", values), win, *pct)
    expected, replaced = oracle(values, win, *pct)
    out = s.samples
    assert len(out) == len(values)
    assert np.allclose(out, expected, rtol=0, atol=1e-9 * (1 + np.abs(expected)))
    assert rep.replaced_indices == replaced
    assert rep.replaced_indices == sorted(set(rep.replaced_indices))
    for start in range(0, len(values), win):
        block = np.array(values[start:start + win])
        assert out[start:start + win].min() >= block.min()
        assert out[start:start + win].max() <= block.max()
        for i in rep.replaced_indices:
            if start <= i < start + win:
                assert out[i] == np.median(block)
