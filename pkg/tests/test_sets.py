import math
from fractions import Fraction
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from setrl.errors import (
    DimensionMismatchError,
    InvalidParamsError,
    KOutOfRangeError,
    SetSizeTooLargeError,
)
from setrl.objectives import mean_reward, pass_at_n, polychromic
from setrl.sets import (
    enumerate_subsets,
    estimate_gradient,
    marginal_advantages,
    sample_subsets,
    scaling_factor,
    score_sets,
)
from tests.conftest import make_batch


class TestEnumerate:
    def test_four_choose_two_lexicographic(self):
        assert enumerate_subsets(4, 2) == [
            (0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3),
        ]

    def test_default_experiment_shape(self):
        subsets = enumerate_subsets(8, 4)
        assert len(subsets) == 70
        # every generation sits in exactly C(7, 3) = 35 subsets
        for i in range(8):
            assert sum(1 for s in subsets if i in s) == 35

    def test_set_size_must_be_smaller_than_batch(self):
        with pytest.raises(SetSizeTooLargeError):
            enumerate_subsets(4, 4)
        with pytest.raises(InvalidParamsError):
            enumerate_subsets(4, 0)


class TestSample:
    def test_deterministic_given_seed(self):
        a = sample_subsets(8, 4, 10, seed=123)
        b = sample_subsets(8, 4, 10, seed=123)
        assert a == b
        assert len(a) == 10
        assert len(set(a)) == 10
        assert a == sorted(a)

    def test_sampling_all_returns_every_subset(self):
        assert sample_subsets(5, 3, 10, seed=0) == enumerate_subsets(5, 3)

    def test_k_bounds(self):
        with pytest.raises(KOutOfRangeError):
            sample_subsets(5, 3, 11, seed=0)
        with pytest.raises(KOutOfRangeError):
            sample_subsets(5, 3, 1, seed=0)

    def test_generator_source_advances(self):
        rng = np.random.default_rng(7)
        first = sample_subsets(8, 4, 5, rng)
        second = sample_subsets(8, 4, 5, rng)
        assert first != second  # astronomically unlikely to collide

    def test_members_are_valid(self):
        for subset in sample_subsets(9, 3, 20, seed=5):
            assert len(subset) == 3
            assert all(0 <= i < 9 for i in subset)
            assert list(subset) == sorted(subset)


class TestScoreSets:
    def test_mean_reward_hand_example(self):
        batch = make_batch([1.0, 1.0, 0.0])
        collection = score_sets(batch, enumerate_subsets(3, 2), mean_reward(2))
        assert collection.scores == pytest.approx((1.0, 0.5, 0.5))
        assert collection.baseline == pytest.approx(2 / 3)
        assert collection.set_advantages == pytest.approx((1 / 3, -1 / 6, -1 / 6))
        marg = marginal_advantages(collection, 3)
        assert marg.values == pytest.approx((1 / 6, 1 / 6, -1 / 3))

    def test_polychromic_hand_example(self):
        batch = make_batch([1.0, 1.0, 0.0], clusters=[1, 2, 1])
        collection = score_sets(batch, enumerate_subsets(3, 2), polychromic(2))
        assert collection.scores == pytest.approx((1.0, 0.25, 0.5))
        assert collection.baseline == pytest.approx(7 / 12)
        marg = marginal_advantages(collection, 3)
        assert marg.values == pytest.approx((1 / 12, 1 / 3, -5 / 12))

    def test_membership_records_positions(self):
        batch = make_batch([1.0, 0.0, 0.0])
        collection = score_sets(batch, [(0, 1), (1, 2)], pass_at_n(2))
        assert collection.membership == ((0,), (0, 1), (1,))

    def test_uncovered_generation_gets_zero(self):
        batch = make_batch([1.0, 0.0, 0.0, 1.0])
        collection = score_sets(batch, [(0, 1), (0, 2)], mean_reward(2))
        marg = marginal_advantages(collection, 4)
        assert marg.values[3] == 0.0

    def test_arity_mismatch(self):
        batch = make_batch([1.0, 0.0, 0.0])
        with pytest.raises(DimensionMismatchError):
            score_sets(batch, [(0, 1, 2)], mean_reward(2))

    def test_out_of_range_subset(self):
        batch = make_batch([1.0, 0.0])
        with pytest.raises(DimensionMismatchError):
            score_sets(batch, [(0, 5)], mean_reward(2))

    def test_empty_subsets_rejected(self):
        batch = make_batch([1.0, 0.0])
        with pytest.raises(InvalidParamsError):
            score_sets(batch, [], mean_reward(2))

    def test_collection_size_checked(self):
        batch = make_batch([1.0, 0.0, 0.0])
        collection = score_sets(batch, enumerate_subsets(3, 2), mean_reward(2))
        with pytest.raises(DimensionMismatchError):
            marginal_advantages(collection, 5)

    @settings(max_examples=60)
    @given(data=st.data())
    def test_marginals_sum_to_zero(self, data):
        n = data.draw(st.integers(min_value=3, max_value=8))
        set_size = data.draw(st.integers(min_value=2, max_value=n - 1))
        rewards = data.draw(
            st.lists(st.floats(min_value=0, max_value=1), min_size=n, max_size=n)
        )
        clusters = data.draw(
            st.lists(st.sampled_from([1, 2, 3, 100]), min_size=n, max_size=n)
        )
        k_all = comb(n, set_size)
        num_sets = data.draw(st.integers(min_value=2, max_value=k_all))
        subsets = (
            enumerate_subsets(n, set_size)
            if num_sets == k_all
            else sample_subsets(n, set_size, num_sets, seed=data.draw(st.integers(0, 999)))
        )
        batch = make_batch(rewards, clusters=clusters)
        collection = score_sets(batch, subsets, polychromic(set_size))
        marg = marginal_advantages(collection, n)
        assert math.isclose(sum(marg.values), 0.0, abs_tol=1e-9)
        assert math.isclose(sum(collection.set_advantages), 0.0, abs_tol=1e-9)


class TestScalingFactor:
    def test_full_enumeration_values(self):
        assert scaling_factor(8, 4, 70) == 35.0  # C(8,4) - C(7,3)
        assert scaling_factor(5, 3, 10) == 4.0   # C(5,3) - C(4,2)

    def test_sampled_value(self):
        assert scaling_factor(5, 3, 4) == pytest.approx(4 / 3)

    def test_sampled_agrees_with_full_at_k_all(self):
        assert scaling_factor(5, 3, 10, formula="sampled") == scaling_factor(
            5, 3, 10, formula="full"
        )
        assert scaling_factor(8, 4, 70, formula="sampled") == 35.0

    def test_sampled_matches_simplified_form(self):
        # the combinatorial expression collapses to (K-1)/(K_all-1) times
        # the full-enumeration factor
        for n_gen, set_size in ((5, 3), (6, 2), (8, 4), (7, 5)):
            k_all = comb(n_gen, set_size)
            full = comb(n_gen, set_size) - comb(n_gen - 1, set_size - 1)
            for num_sets in range(2, k_all + 1):
                expected = float(Fraction(num_sets - 1, k_all - 1) * full)
                assert scaling_factor(n_gen, set_size, num_sets) == pytest.approx(
                    expected, rel=1e-12
                )

    def test_forced_full_requires_k_all(self):
        with pytest.raises(KOutOfRangeError):
            scaling_factor(5, 3, 4, formula="full")

    def test_bad_formula(self):
        with pytest.raises(InvalidParamsError):
            scaling_factor(5, 3, 10, formula="exact")

    def test_bounds(self):
        with pytest.raises(SetSizeTooLargeError):
            scaling_factor(4, 4, 1)
        with pytest.raises(KOutOfRangeError):
            scaling_factor(5, 3, 11)


class TestEstimateGradient:
    def test_matches_manual_sum(self):
        batch = make_batch([1.0, 1.0, 0.0])
        collection = score_sets(batch, enumerate_subsets(3, 2), mean_reward(2))
        marg = marginal_advantages(collection, 3)
        grads = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        estimate = estimate_gradient(batch, marg, grads)
        manual = sum(np.asarray(m) * g for m, g in zip(grads, marg.values))
        assert estimate == pytest.approx(tuple(manual))

    def test_rejects_wrong_row_count(self):
        batch = make_batch([1.0, 0.0])
        collection = score_sets(batch, [(0, 1)], mean_reward(2))
        marg = marginal_advantages(collection, 2)
        with pytest.raises(DimensionMismatchError):
            estimate_gradient(batch, marg, np.zeros((3, 2)))

    def test_rejects_wrong_rank(self):
        batch = make_batch([1.0, 0.0])
        collection = score_sets(batch, [(0, 1)], mean_reward(2))
        marg = marginal_advantages(collection, 2)
        with pytest.raises(DimensionMismatchError):
            estimate_gradient(batch, marg, np.zeros(2))
