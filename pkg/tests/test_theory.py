import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from damc.theory import (
    disagreement_ratio_bruteforce,
    disagreement_ratio_exact,
    divergence_estimate,
    empirical_disagreement,
    montecarlo_random_bank_ratio,
    ratio_recurrence_check,
)


class TestExactRatio:
    @pytest.mark.parametrize("c,k", list(itertools.product(range(2, 6), repeat=2)))
    def test_matches_enumeration(self, c, k):
        assert disagreement_ratio_exact(c, k).fraction == disagreement_ratio_bruteforce(c, k).fraction

    @pytest.mark.parametrize("c,k,expected", [
        (3, 2, Fraction(2, 3)),
        (3, 3, Fraction(2, 9)),
        (4, 3, Fraction(3, 8)),
        (2, 2, Fraction(1, 2)),
        (2, 3, Fraction(1, 2)),
    ])
    def test_known_values(self, c, k, expected):
        assert disagreement_ratio_exact(c, k).fraction == expected

    def test_bruteforce_counts(self):
        r = disagreement_ratio_bruteforce(3, 2)
        assert (r.numerator, r.denominator) == (6, 9)
        r = disagreement_ratio_bruteforce(3, 3)
        assert (r.numerator, r.denominator) == (6, 27)

    def test_twelve_classes_six_heads(self):
        assert disagreement_ratio_exact(12, 6).value == pytest.approx(0.2228, abs=5e-4)

    def test_saturates_beyond_c(self):
        for c in (2, 3, 7):
            assert disagreement_ratio_exact(c, c + 3).fraction == disagreement_ratio_exact(c, c).fraction

    def test_large_values_exact(self):
        # numerator and denominator stay exact beyond 64-bit range
        r = disagreement_ratio_exact(40, 30)
        assert r.denominator == 40**30
        assert r.fraction > 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            disagreement_ratio_exact(1, 2)
        with pytest.raises(ValueError):
            disagreement_ratio_exact(3, 1)

    @settings(max_examples=50)
    @given(st.integers(2, 30), st.integers(2, 30))
    def test_nonincreasing_in_k(self, c, k):
        assert disagreement_ratio_exact(c, k + 1).fraction <= disagreement_ratio_exact(c, k).fraction


class TestRecurrence:
    @pytest.mark.parametrize("c", [3, 5, 12])
    def test_quotients(self, c):
        for k, q in ratio_recurrence_check(c):
            assert q == (Fraction(c - k + 1, c) if k <= c else 1)

    def test_examples(self):
        q = dict(ratio_recurrence_check(3))
        assert q[3] == Fraction(1, 3)
        assert dict(ratio_recurrence_check(12))[12] == Fraction(1, 12)
        assert dict(ratio_recurrence_check(2))[3] == 1

    @settings(max_examples=30)
    @given(st.integers(3, 25))
    def test_quotient_bounds(self, c):
        for k, q in ratio_recurrence_check(c):
            if k <= c:
                assert Fraction(1, c) <= q <= Fraction(c - 1, c)


class TestEmpirical:
    def test_agreement(self):
        assert empirical_disagreement(np.array([[1, 1, 1], [0, 0, 0]])) == 0.0

    def test_two_heads_one_differs(self):
        assert empirical_disagreement(np.array([[0, 0], [1, 1], [2, 0], [1, 1]])) == 0.25

    def test_three_heads(self):
        assert empirical_disagreement(np.array([[0, 1, 2]])) == pytest.approx(1.0)
        assert empirical_disagreement(np.array([[0, 0, 1]])) == pytest.approx(2 / 3)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            empirical_disagreement(np.array([[1], [2]]))

    def test_divergence(self):
        same = np.array([[0, 1], [1, 1]])
        assert divergence_estimate(same, same) == 0.0
        assert divergence_estimate(np.zeros((3, 2), int), np.array([[0, 1]] * 3)) == 2.0
        # eps_S = 0.1, eps_T = 0.4
        src = np.array([[0, 1]] + [[0, 0]] * 9)
        tgt = np.array([[0, 1]] * 4 + [[0, 0]] * 6)
        assert divergence_estimate(src, tgt) == pytest.approx(0.6)


class TestMonteCarlo:
    @pytest.mark.parametrize("c,k", [(3, 2), (3, 3), (12, 6), (2, 2), (2, 4)])
    def test_close_to_exact(self, c, k):
        mc = montecarlo_random_bank_ratio(c, k, 100_000, seed=0)
        assert abs(mc - disagreement_ratio_exact(c, k).value) <= 0.01

    def test_seeded(self):
        assert montecarlo_random_bank_ratio(5, 3, 1000, 4) == montecarlo_random_bank_ratio(5, 3, 1000, 4)
