from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pachange.errors import InvalidFractions
from pachange.metrics import rand_index, segment_labels


def brute_rand(true, est, n):
    a, b = segment_labels(true, n), segment_labels(est, n)
    pairs = list(combinations(range(n), 2))
    agree = sum((a[i] == a[j]) == (b[i] == b[j]) for i, j in pairs)
    return agree / len(pairs)


fractions = st.lists(st.floats(0.01, 0.99), max_size=4, unique=True).map(sorted)


class TestSegmentLabels:
    def test_cut_convention(self):
        # x lies after cut c when x > floor(c n)
        assert segment_labels([0.5], 4).tolist() == [0, 0, 1, 1]
        assert segment_labels([0.3], 10).tolist() == [0, 0, 0] + [1] * 7

    def test_invalid(self):
        for bad in ([0.0], [1.0], [0.6, 0.4], [0.5, 0.5], [float("nan")]):
            with pytest.raises(InvalidFractions):
                segment_labels(bad, 10)


class TestRandIndex:
    def test_identical(self):
        assert rand_index([0.2, 0.5], [0.2, 0.5], 1000) == 1.0

    def test_hand_example(self):
        assert rand_index([0.5], [], 4) == pytest.approx(1 / 3)

    def test_empty_both(self):
        assert rand_index([], [], 10) == 1.0

    def test_small_n(self):
        with pytest.raises(InvalidFractions):
            rand_index([], [], 1)

    @given(fractions, fractions)
    def test_symmetric(self, a, b):
        assert rand_index(a, b, 500) == pytest.approx(rand_index(b, a, 500), abs=1e-15)

    @given(fractions, fractions, st.integers(2, 200))
    def test_brute_force(self, a, b, n):
        r = rand_index(a, b, n)
        assert 0.0 <= r <= 1.0
        assert r == pytest.approx(brute_rand(a, b, n), abs=1e-12)

    def test_large_n_is_cheap(self):
        assert 0.9 < rand_index([0.2, 0.5], [0.21, 0.49], 10**9) < 1.0
