import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flare.errors import EmptyInputError, EmptyWindowError
from flare.features import (
    FLOW_DIM,
    PACKET_DIM,
    FlowFeatures,
    PacketFeatures,
    StatBlock,
    feature_matrix,
    flow_features,
    packet_features,
    summary_stats,
)
from flare.segmentation import TrafficWindow, WindowOrigin

CLIENT = "02:00:00:00:00:01"


def window_of(timestamps, sizes, uplink=None, start=0.0, duration=300.0):
    n = len(timestamps)
    if uplink is None:
        uplink = np.ones(n, dtype=bool)
    return TrafficWindow(
        start_s=start,
        duration_s=duration,
        timestamps=np.asarray(timestamps, dtype=float),
        sizes=np.asarray(sizes, dtype=int),
        uplink=np.asarray(uplink, dtype=bool),
        origin=WindowOrigin(CLIENT, "t", 0),
    )


# independent oracles ---------------------------------------------------------

def oracle_percentile(values, q):
    """Sort-based linear interpolation between order statistics."""
    xs = sorted(values)
    pos = (q / 100.0) * (len(xs) - 1)
    lo = math.floor(pos)
    hi = math.ceil(pos)
    frac = pos - lo
    return xs[lo] * (1 - frac) + xs[hi] * frac


def oracle_moments(values):
    n = len(values)
    mean = sum(values) / n
    m2 = sum((x - mean) ** 2 for x in values) / n
    m3 = sum((x - mean) ** 3 for x in values) / n
    m4 = sum((x - mean) ** 4 for x in values) / n
    skew = 0.0 if m2 == 0 else m3 / m2**1.5
    kurt = 0.0 if m2 == 0 else m4 / m2**2
    return mean, m2, skew, kurt


class TestSummaryStats:
    def test_constant_input_convention(self):
        sb = summary_stats(np.array([5.0, 5, 5, 5]))
        assert sb.mean == 5 and sb.std == 0
        assert sb.skewness == 0 and sb.kurtosis == 0
        assert all(d == 5 for d in sb.deciles)
        assert sb.mad == 0

    def test_symmetric_set_zero_skewness(self):
        assert summary_stats(np.array([1.0, 2, 3, 4, 5])).skewness == pytest.approx(0.0, abs=1e-12)

    def test_moment_oracle_on_outlier_set(self):
        values = [1.0, 2.0, 3.0, 4.0, 100.0]
        sb = summary_stats(np.array(values))
        mean, m2, skew, kurt = oracle_moments(values)
        assert sb.mean == pytest.approx(mean, abs=1e-9)
        assert sb.variance == pytest.approx(m2, abs=1e-9)
        assert sb.skewness == pytest.approx(skew, abs=1e-9)
        assert sb.kurtosis == pytest.approx(kurt, abs=1e-9)

    def test_percentiles_match_sort_oracle(self, rng):
        values = rng.random(137) * 50
        sb = summary_stats(values)
        for d, q in zip(sb.deciles, range(10, 100, 10)):
            assert d == pytest.approx(oracle_percentile(values.tolist(), q), abs=1e-9)
        assert sb.median == pytest.approx(oracle_percentile(values.tolist(), 50), abs=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(EmptyInputError):
            summary_stats(np.array([]))

    def test_invariants(self, rng):
        values = rng.normal(10, 3, size=80)
        sb = summary_stats(values)
        assert sb.min <= min(sb.deciles) and max(sb.deciles) <= sb.max
        assert list(sb.deciles) == sorted(sb.deciles)
        assert sb.variance >= 0
        assert sb.std == pytest.approx(math.sqrt(sb.variance), abs=1e-12)

    def test_mad_is_median_absolute_deviation(self, rng):
        values = rng.random(41) * 9
        sb = summary_stats(values)
        med = oracle_percentile(values.tolist(), 50)
        expected = oracle_percentile([abs(v - med) for v in values], 50)
        assert sb.mad == pytest.approx(expected, abs=1e-9)


class TestFlowFeatures:
    def test_uniform_rate(self):
        ts = np.arange(300, dtype=float) + 0.5  # one packet per second
        ff = flow_features(window_of(ts, np.full(300, 500)))
        mean, mx, mn, med, std = ff.rate_stats
        assert mean == 1.0 and std == 0.0 and mx == 1.0 and mn == 1.0 and med == 1.0

    def test_empty_direction_sentinel(self):
        ff = flow_features(window_of([1.0, 2.0], [100, 200], uplink=[True, True]))
        assert ff.down_size == StatBlock.zeros()
        assert ff.up_size.mean == 150.0

    def test_matches_bruteforce_binning_oracle(self, rng):
        n = 400
        ts = np.sort(rng.random(n) * 300.0)
        sizes = rng.integers(40, 1500, size=n)
        up = rng.random(n) < 0.6
        ff = flow_features(window_of(ts, sizes, up))
        # oracle: dict-based per-second bins
        counts = {s: 0 for s in range(300)}
        for t in ts:
            counts[min(int(t), 299)] += 1
        series = [counts[s] for s in range(300)]
        mean = sum(series) / 300
        assert ff.rate_stats[0] == pytest.approx(mean, abs=1e-9)
        assert ff.rate_stats[1] == max(series)
        assert ff.rate_stats[2] == min(series)
        assert ff.rate_stats[3] == pytest.approx(oracle_percentile(series, 50), abs=1e-9)
        assert ff.rate_stats[4] == pytest.approx(
            math.sqrt(sum((c - mean) ** 2 for c in series) / 300), abs=1e-9
        )
        up_mean, _, up_skew, _ = oracle_moments(sizes[up].tolist())
        assert ff.up_size.mean == pytest.approx(up_mean, abs=1e-9)
        vec = ff.as_vector()
        assert vec.shape == (FLOW_DIM,)
        assert np.isfinite(vec).all()

    def test_equal_timestamp_permutation_invariance(self):
        ts = np.array([1.0, 1.0, 1.0, 5.0])
        sizes = np.array([10, 20, 30, 40])
        up = np.array([True, False, True, False])
        a = flow_features(window_of(ts, sizes, up)).as_vector()
        perm = [2, 0, 1, 3]  # permute the tied first three packets
        b = flow_features(window_of(ts[perm], sizes[perm], up[perm])).as_vector()
        assert np.array_equal(a, b)

    def test_empty_window_rejected(self):
        with pytest.raises(EmptyWindowError):
            flow_features(window_of([], []))


class TestPacketFeatures:
    def test_singleton_window(self):
        pf = packet_features(window_of([0.0], [100], start=0.0))
        hist = np.asarray(pf.length_histogram)
        assert hist[1] == 1.0 and hist.sum() == 1.0  # bin [64, 128)
        assert pf.first_iat == 0.0 and pf.last_iat == 0.0
        assert pf.first_size == 100 and pf.last_size == 100

    def test_three_known_bins(self):
        pf = packet_features(window_of([1.0, 2.0, 3.0], [70, 130, 1500]))
        hist = np.asarray(pf.length_histogram)
        assert hist[70 // 64] == pytest.approx(1 / 3)
        assert hist[130 // 64] == pytest.approx(1 / 3)
        assert hist[1500 // 64] == pytest.approx(1 / 3)
        assert 1500 // 64 == 23  # [1472, 1536)

    def test_last_bin_open_ended(self):
        pf = packet_features(window_of([0.0], [999999]))
        assert np.asarray(pf.length_histogram)[24] == 1.0

    def test_edge_stats(self):
        pf = packet_features(window_of([2.0, 4.0, 7.5], [10, 20, 30], start=1.0))
        assert pf.first_iat == pytest.approx(1.0)  # gap from window start
        assert pf.last_iat == pytest.approx(3.5)
        assert pf.first_size == 10 and pf.last_size == 30

    def test_vector_shape(self, rng):
        n = 50
        w = window_of(np.sort(rng.random(n) * 300), rng.integers(1, 2000, size=n))
        vec = packet_features(w).as_vector()
        assert vec.shape == (PACKET_DIM,)


@given(
    st.lists(st.integers(min_value=1, max_value=4000), min_size=1, max_size=100)
)
def test_histogram_sums_to_one(sizes):
    ts = np.linspace(0, 200, len(sizes))
    pf = packet_features(window_of(ts, sizes))
    assert sum(pf.length_histogram) == pytest.approx(1.0, abs=1e-9)


class TestDeterminismAndShape:
    def test_deterministic_vectors(self, rng):
        n = 100
        w = window_of(np.sort(rng.random(n) * 300), rng.integers(1, 2000, size=n))
        assert np.array_equal(flow_features(w).as_vector(), flow_features(w).as_vector())
        assert np.array_equal(packet_features(w).as_vector(), packet_features(w).as_vector())

    def test_dimensionality_constant_over_corpus(self, rng):
        windows = []
        for _ in range(1000):
            n = int(rng.integers(1, 40))
            windows.append(
                window_of(np.sort(rng.random(n) * 300), rng.integers(1, 3000, size=n))
            )
        X_flow, X_pkt = feature_matrix(windows)
        assert X_flow.shape == (1000, 39)
        assert X_pkt.shape == (1000, 29)
        assert np.isfinite(X_flow).all() and np.isfinite(X_pkt).all()

    def test_column_names_align(self):
        assert len(FlowFeatures.column_names()) == FLOW_DIM
        assert len(PacketFeatures.column_names()) == PACKET_DIM
