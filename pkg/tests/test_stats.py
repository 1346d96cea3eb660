"""Streaming moment accumulation and ensemble bookkeeping.

The single-pass merged moments are checked against a plain two-pass
computation, and the merge operation against exact identity/consistency
requirements that the parallel engine relies on.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from transmon_mipt import (
    EnsembleStats,
    InsufficientSectorData,
    RunningMoments,
    TrajectoryRecord,
    accumulate,
    merge,
    merge_moments,
)
from transmon_mipt.stats import asymptotic_scaling_fit, sector_dispersion


def two_pass_moments(xs):
    xs = np.asarray(xs, dtype=float)
    mean = xs.mean()
    d = xs - mean
    return len(xs), mean, np.sum(d**2), np.sum(d**3), np.sum(d**4)


def fold(xs):
    acc = RunningMoments()
    for x in xs:
        acc.push(x)
    return acc


def make_record(i, cfg, entropy=0.1, fluct=0.05):
    cfg = tuple(cfg)
    half = len(cfg) // 2
    return TrajectoryRecord(
        iteration=i,
        entropy_half=entropy,
        mean_half=float(sum(cfg[:half])),
        fluctuation_half=fluct,
        sampled_config=cfg,
        n_half=sum(cfg[:half]),
        n_total=sum(cfg),
        n_mid_lo=cfg[half - 1],
        n_mid_hi=cfg[half],
        outcomes=None,
    )


class TestRunningMoments:
    def test_singleton(self):
        acc = RunningMoments.of(2.5)
        assert (acc.n, acc.mean, acc.M2, acc.M3, acc.M4) == (1, 2.5, 0.0, 0.0, 0.0)

    def test_matches_two_pass(self):
        rng = np.random.default_rng(13)
        for size in (2, 3, 10, 1000):
            xs = rng.normal(size=size) * 3.0 + 1.0
            acc = fold(xs)
            n, mean, M2, M3, M4 = two_pass_moments(xs)
            assert acc.n == n
            assert acc.mean == pytest.approx(mean, rel=1e-12)
            assert acc.M2 == pytest.approx(M2, rel=1e-10)
            assert acc.M3 == pytest.approx(M3, rel=1e-8, abs=1e-8)
            assert acc.M4 == pytest.approx(M4, rel=1e-10)

    def test_variance_conventions(self):
        xs = [1.0, 2.0, 3.0, 4.0]
        acc = fold(xs)
        assert acc.variance == pytest.approx(np.var(xs))
        assert acc.sample_variance == pytest.approx(np.var(xs, ddof=1))
        assert acc.stderr_mean == pytest.approx(np.std(xs, ddof=1) / 2.0)

    def test_variance_stderr_formula(self):
        rng = np.random.default_rng(21)
        xs = rng.normal(size=5000)
        acc = fold(xs)
        m2 = np.mean((xs - xs.mean()) ** 2)
        m4 = np.mean((xs - xs.mean()) ** 4)
        want = np.sqrt((m4 - m2**2) / len(xs))
        assert acc.variance_stderr == pytest.approx(want, rel=1e-9)

    def test_empty_properties(self):
        acc = RunningMoments()
        assert acc.variance == 0.0
        assert acc.stderr_mean == 0.0
        assert acc.variance_stderr == 0.0


class TestMerge:
    def test_empty_is_exact_identity(self):
        acc = fold([0.1, 0.7, 0.3])
        left = merge_moments(RunningMoments(), acc)
        right = merge_moments(acc, RunningMoments())
        for m in (left, right):
            assert (m.n, m.mean, m.M2, m.M3, m.M4) == (
                acc.n, acc.mean, acc.M2, acc.M3, acc.M4
            )

    def test_push_is_merge_with_singleton(self):
        """Bitwise: the two code paths are literally the same."""
        xs = [0.42, -1.3, 0.0, 2.25, 0.5]
        a = RunningMoments()
        b = RunningMoments()
        for x in xs:
            a.push(x)
            merged = merge_moments(b, RunningMoments.of(x))
            b.n, b.mean, b.M2, b.M3, b.M4 = (
                merged.n, merged.mean, merged.M2, merged.M3, merged.M4
            )
            assert (a.n, a.mean, a.M2, a.M3, a.M4) == (b.n, b.mean, b.M2, b.M3, b.M4)

    def test_segment_merge_matches_fold(self):
        rng = np.random.default_rng(31)
        xs = rng.normal(size=257)
        whole = fold(xs)
        parts = merge_moments(fold(xs[:100]), fold(xs[100:]))
        assert parts.n == whole.n
        assert parts.mean == pytest.approx(whole.mean, rel=1e-13)
        assert parts.M2 == pytest.approx(whole.M2, rel=1e-11)
        assert parts.M3 == pytest.approx(whole.M3, rel=1e-8, abs=1e-9)
        assert parts.M4 == pytest.approx(whole.M4, rel=1e-11)


@given(
    xs=st.lists(
        st.floats(min_value=-100, max_value=100, allow_nan=False),
        min_size=1, max_size=40,
    ),
    split=st.integers(min_value=0, max_value=40),
)
@settings(max_examples=100)
def test_merge_consistent_with_any_split(xs, split):
    split = min(split, len(xs))
    whole = fold(xs)
    parts = merge_moments(fold(xs[:split]), fold(xs[split:]))
    assert parts.n == whole.n
    assert parts.mean == pytest.approx(whole.mean, rel=1e-9, abs=1e-9)
    assert parts.M2 == pytest.approx(whole.M2, rel=1e-7, abs=1e-6)


@given(
    a=st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=20),
    b=st.lists(st.floats(min_value=-10, max_value=10), min_size=1, max_size=20),
)
@settings(max_examples=100)
def test_merge_commutes(a, b):
    ab = merge_moments(fold(a), fold(b))
    ba = merge_moments(fold(b), fold(a))
    assert ab.n == ba.n
    assert ab.mean == pytest.approx(ba.mean, rel=1e-10, abs=1e-12)
    assert ab.M2 == pytest.approx(ba.M2, rel=1e-9, abs=1e-9)
    assert ab.M4 == pytest.approx(ba.M4, rel=1e-8, abs=1e-8)


class TestEnsembleStats:
    def test_accumulate_counts_and_histograms(self):
        stats = EnsembleStats(4, 2)
        configs = [(1, 0, 1, 0), (1, 1, 0, 0), (0, 1, 1, 1), (1, 0, 1, 0)]
        for i, cfg in enumerate(configs):
            accumulate(stats, make_record(i, cfg))
        assert stats.count == 4
        assert stats.hist_total.sum() == 4
        assert stats.hist_total[2] == 3
        assert stats.hist_total[3] == 1
        assert stats.hist_mid_lo.sum() == 4
        # mid-lo is site L/2 = 2 (1-indexed)
        assert stats.hist_mid_lo[0] == 2
        assert stats.hist_mid_lo[1] == 2

    def test_sector_bookkeeping(self):
        stats = EnsembleStats(4, 2)
        accumulate(stats, make_record(0, (1, 0, 1, 0)))
        accumulate(stats, make_record(1, (1, 1, 0, 0)))
        accumulate(stats, make_record(2, (1, 1, 1, 0)))
        assert sorted(stats.sectors) == [2, 3]
        assert stats.sectors[2].n == 2
        assert stats.sectors[2].mean == pytest.approx(1.5)  # n_half of 1 and 2
        # n_half values 1 and 2 -> population variance 0.25
        assert sector_dispersion(stats, 2) == pytest.approx(0.25)
        with pytest.raises(InsufficientSectorData) as err:
            sector_dispersion(stats, 4)
        assert err.value.sector == 4

    def test_rejects_malformed_config(self):
        stats = EnsembleStats(4, 2)
        with pytest.raises(ValueError):
            accumulate(stats, make_record(0, (1, 0, 1)))
        with pytest.raises(ValueError):
            accumulate(stats, make_record(0, (1, 0, 1, 2)))

    def test_merge_matches_sequential(self):
        rng = np.random.default_rng(7)
        records = [
            make_record(i, rng.integers(0, 2, size=4), entropy=rng.random(),
                        fluct=rng.random())
            for i in range(64)
        ]
        whole = EnsembleStats(4, 2)
        for rec in records:
            accumulate(whole, rec)
        a = EnsembleStats(4, 2)
        b = EnsembleStats(4, 2)
        for rec in records[:32]:
            accumulate(a, rec)
        for rec in records[32:]:
            accumulate(b, rec)
        combined = merge(a, b)
        assert combined.count == whole.count
        np.testing.assert_array_equal(combined.hist_total, whole.hist_total)
        np.testing.assert_array_equal(combined.hist_mid_lo, whole.hist_mid_lo)
        assert combined.entropy.mean == pytest.approx(whole.entropy.mean, rel=1e-12)
        assert combined.n_total.M2 == pytest.approx(whole.n_total.M2, rel=1e-10, abs=1e-12)
        assert sorted(combined.sectors) == sorted(whole.sectors)

    def test_merge_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            merge(EnsembleStats(4, 2), EnsembleStats(6, 2))
        with pytest.raises(ValueError):
            merge(EnsembleStats(4, 2), EnsembleStats(4, 3))

    def test_merge_with_empty_is_exact(self):
        stats = EnsembleStats(4, 2)
        accumulate(stats, make_record(0, (1, 0, 1, 0), entropy=0.3))
        accumulate(stats, make_record(1, (0, 1, 0, 1), entropy=0.9))
        out = merge(stats, EnsembleStats(4, 2))
        assert out == stats


class TestScalingFit:
    def test_recovers_exact_power_law(self):
        ps = np.array([0.2, 0.3, 0.4, 0.5, 0.6])
        ys = 0.7 * ps**-2.0
        slope = asymptotic_scaling_fit(list(zip(ps, ys)), window=(0.1, 0.7))
        assert slope == pytest.approx(-2.0, abs=1e-12)

    def test_window_filters_points(self):
        ps = np.array([0.05, 0.2, 0.3, 0.4, 0.5, 0.9])
        ys = np.where((ps >= 0.1) & (ps <= 0.6), 2.0 * ps**1.5, 99.0)
        slope = asymptotic_scaling_fit(list(zip(ps, ys)), window=(0.1, 0.6))
        assert slope == pytest.approx(1.5, abs=1e-12)

    def test_needs_enough_points(self):
        with pytest.raises(ValueError):
            asymptotic_scaling_fit([(0.2, 1.0), (0.3, 0.9), (0.4, 0.8)], window=(0.1, 0.5))

    def test_rejects_nonpositive_values(self):
        pairs = [(0.2, 1.0), (0.3, 0.0), (0.4, 0.8), (0.5, 0.7)]
        with pytest.raises(ValueError):
            asymptotic_scaling_fit(pairs, window=(0.1, 0.6))
