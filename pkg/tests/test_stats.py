import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fccrate.exceptions import TooSparse
from fccrate.stats import (LEFT, NOT_LEFT, as_curve, empty_curve, grubbs_critical,
                           grubbs_iterative, interpolate_curve, outlier_clean_voltage,
                           skew_direction)


class TestSkewDirection:
    def test_symmetric(self):
        x = np.random.default_rng(1).normal(4000, 30, 1000)
        assert skew_direction(x) == NOT_LEFT

    def test_heavy_low_tail(self):
        x = 4100 - np.random.default_rng(2).exponential(40, 1000)
        assert skew_direction(x) == LEFT

    def test_heavy_high_tail_is_not_left(self):
        x = 4000 + np.random.default_rng(3).exponential(40, 1000)
        assert skew_direction(x) == NOT_LEFT

    def test_too_few_values(self):
        assert skew_direction(-np.arange(10.0) ** 3) == NOT_LEFT

    @settings(max_examples=30, deadline=None)
    @given(shift=st.floats(-1e4, 1e4), seed=st.integers(0, 1000))
    def test_shift_invariant(self, shift, seed):
        x = 100 - np.random.default_rng(seed).exponential(5, 200)
        assert skew_direction(x) == skew_direction(x + shift)


class TestGrubbs:
    # published two-sided critical values at alpha = 0.05
    @pytest.mark.parametrize("n, table", [(5, 1.715), (10, 2.290), (20, 2.709), (50, 3.128),
                                          (100, 3.383)])
    def test_critical_values(self, n, table):
        assert grubbs_critical(n, 0.05) == pytest.approx(table, abs=2e-3)

    def test_constant(self):
        assert grubbs_iterative([5.0] * 20) == []

    def test_hand_case(self):
        # G = 78 / 43.62 = 1.788 > 1.715 (n = 5); then {1,2,3,4}: G = 1.16 < 1.481
        x = [1, 2, 3, 4, 100]
        g = (100 - np.mean(x)) / np.std(x, ddof=1)
        assert g == pytest.approx(1.788, abs=1e-3)
        assert grubbs_iterative(x, 0.05, min_n=5) == [4]

    def test_below_minimum_n(self):
        assert grubbs_iterative([1, 2, 3, 4, 100]) == []

    def test_single_spike(self):
        x = np.random.default_rng(7).normal(0, 1, 50)
        x = np.append(x, 10.0)
        assert grubbs_iterative(x) == [50]

    def test_ignores_nan(self):
        x = np.r_[np.random.default_rng(8).normal(0, 1, 30), np.nan, 12.0]
        assert grubbs_iterative(x) == [31]

    def test_clean_normal_rarely_flags(self):
        rng = np.random.default_rng(11)
        flagged = 0
        trials = 0
        while trials < 200:
            x = rng.normal(0, 1, 50)
            if np.abs(x - x.mean()).max() > 3 * x.std(ddof=1):
                continue
            trials += 1
            flagged += bool(grubbs_iterative(x))
        assert flagged / trials <= 0.1


class TestInterpolate:
    def test_midpoint(self):
        c = interpolate_curve(as_curve({39: 4000, 41: 4010}), 39, 41)
        assert c[40] == 4005

    def test_linear(self):
        c = interpolate_curve(as_curve({10: 3700, 20: 3800}), 10, 20)
        assert c[15] == 3750

    def test_flat_extrapolation(self):
        c = interpolate_curve(as_curve({15: 3800, 20: 3850}), 10, 25)
        assert c[10] == 3800
        assert c[25] == 3850

    def test_outside_range_untouched(self):
        c = interpolate_curve(as_curve({5: 3500, 15: 3800, 20: 3850}), 10, 20)
        assert c[5] == 3500
        assert np.isnan(c[6])
        assert np.isnan(c[30])

    def test_too_sparse(self):
        with pytest.raises(TooSparse):
            interpolate_curve(as_curve({15: 3800}), 10, 20)

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.integers(0, 100), st.floats(2500, 4600), min_size=2),
           st.integers(0, 50), st.integers(51, 100))
    def test_idempotent(self, known, lo, hi):
        c = as_curve(known)
        try:
            once = interpolate_curve(c, lo, hi)
        except TooSparse:
            return
        np.testing.assert_array_equal(interpolate_curve(once, lo, hi), once)


def _smooth():
    c = empty_curve()
    soc = np.arange(10, 81)
    c[10:81] = 3700 + 6.5 * (soc - 10)
    return c


class TestOutlierClean:
    def test_smooth_unchanged(self):
        c = _smooth()
        np.testing.assert_array_equal(outlier_clean_voltage(c, 10, 80), c)

    def test_single_spike_repaired(self):
        c = _smooth()
        dirty = c.copy()
        dirty[40] += 200
        clean = outlier_clean_voltage(dirty, 10, 80)
        assert abs(clean[40] - c[40]) < 10

    def test_two_adjacent_spikes_repaired(self):
        c = _smooth()
        dirty = c.copy()
        dirty[40] += 200
        dirty[41] += 180
        clean = outlier_clean_voltage(dirty, 10, 80)
        assert abs(clean[40] - c[40]) < 10
        assert abs(clean[41] - c[41]) < 10

    def test_unflagged_entries_preserved(self):
        rng = np.random.default_rng(5)
        c = _smooth()
        c[10:81] += rng.normal(0, 1.5, 71)
        c[55] += 250
        clean = outlier_clean_voltage(c, 10, 80)
        changed = np.flatnonzero(clean[10:81] != c[10:81]) + 10
        assert 55 in changed
        assert set(changed) <= {55, 56}
