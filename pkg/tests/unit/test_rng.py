"""
Unit tests for the SplitMix64 streams.
"""

import numpy as np
import pytest

from atoms.rng import SplitMix64, derive_seed


class TestSplitMix64:
    """Tests for the deterministic generator."""

    def test_reference_outputs(self) -> None:
        """Test the first outputs for seed 0 against the published sequence."""
        out = SplitMix64(0).next_u64(3)
        assert [int(v) for v in out] == [
            0xE220A8397B1DCDAF,
            0x6E789E6AA1B965F4,
            0x06C45D188009454F,
        ]

    def test_block_draws_match_single_draws(self) -> None:
        """Test that one block of 5 equals five blocks of 1."""
        block = SplitMix64(42).next_u64(5)
        single = SplitMix64(42)
        one_by_one = np.concatenate([single.next_u64(1) for _ in range(5)])
        np.testing.assert_array_equal(block, one_by_one)

    def test_same_seed_same_stream(self) -> None:
        """Test reproducibility across generator instances."""
        np.testing.assert_array_equal(
            SplitMix64(9).normal((4, 3)), SplitMix64(9).normal((4, 3))
        )

    def test_uniform_range(self) -> None:
        """Test that uniform samples stay inside [low, high)."""
        values = SplitMix64(1).uniform(1000, -2.0, 3.0)
        assert values.min() >= -2.0
        assert values.max() < 3.0

    def test_normal_moments(self) -> None:
        """Test rough mean and spread of the Box-Muller draws."""
        values = SplitMix64(2).normal(20000, std=2.0)
        assert abs(values.mean()) < 0.05
        assert abs(values.std() - 2.0) < 0.05

    def test_choice_is_distinct(self) -> None:
        """Test that choice draws without replacement."""
        picks = SplitMix64(3).choice(10, 10)
        assert sorted(picks.tolist()) == list(range(10))

    def test_choice_bounds(self) -> None:
        """Test that impossible draws are rejected."""
        with pytest.raises(ValueError):
            SplitMix64(3).choice(3, 4)
        with pytest.raises(ValueError):
            SplitMix64(3).integers(0, 2)

    def test_spawn_is_independent_of_later_draws(self) -> None:
        """Test that a child stream depends only on the parent state and label."""
        parent = SplitMix64(5)
        child_a = parent.spawn("block", 0).uniform(3)
        child_b = SplitMix64(5).spawn("block", 0).uniform(3)
        np.testing.assert_array_equal(child_a, child_b)
        other = SplitMix64(5).spawn("block", 1).uniform(3)
        assert not np.array_equal(child_a, other)


class TestDeriveSeed:
    """Tests for labelled sub-stream seeds."""

    def test_stable(self) -> None:
        """Test that the same labels give the same seed."""
        assert derive_seed(0, "eval") == derive_seed(0, "eval")

    def test_labels_matter(self) -> None:
        """Test that different labels give different seeds."""
        assert derive_seed(0, "train", 1, 0) != derive_seed(0, "train", 0, 1)

    def test_fits_in_64_bits(self) -> None:
        """Test the seed range."""
        assert 0 <= derive_seed(2**64 - 1, "x") < 2**64
