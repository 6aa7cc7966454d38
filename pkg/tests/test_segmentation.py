import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flare.errors import EmptyTraceError
from flare.ingest import ClientTrace
from flare.segmentation import (
    TrafficWindow,
    WindowConfig,
    WindowOrigin,
    filter_active,
    segment,
    trace_is_active,
)

CLIENT = "02:00:00:00:00:01"


def make_trace(timestamps, sizes=None):
    ts = np.asarray(timestamps, dtype=float)
    if sizes is None:
        sizes = np.full(len(ts), 1000, dtype=int)
    return ClientTrace(CLIENT, ts, sizes, np.ones(len(ts), dtype=bool))


def make_window(sizes, start=0.0, duration=10.0, timestamps=None):
    sizes = np.asarray(sizes, dtype=int)
    if timestamps is None:
        timestamps = start + np.linspace(0, duration * 0.9, len(sizes))
    return TrafficWindow(
        start_s=start,
        duration_s=duration,
        timestamps=np.asarray(timestamps, dtype=float),
        sizes=sizes,
        uplink=np.ones(len(sizes), dtype=bool),
        origin=WindowOrigin(CLIENT, "t", 0),
    )


class TestWindowConfig:
    def test_stride_larger_than_window_rejected(self):
        with pytest.raises(ValueError):
            WindowConfig(window_s=300, stride_s=301)

    def test_default_stride_equals_window(self):
        cfg = WindowConfig(window_s=250)
        assert cfg.effective_stride_s == 250

    def test_positive_parameters_required(self):
        with pytest.raises(ValueError):
            WindowConfig(window_s=0)
        with pytest.raises(ValueError):
            WindowConfig(tau_bytes=0)


class TestSegment:
    def test_600s_trace_gives_two_300s_windows(self):
        ts = np.arange(0.0, 600.0, 1.0)  # spans [0, 599]
        windows = segment(make_trace(ts), WindowConfig(window_s=300, stride_s=300))
        assert len(windows) == 2
        assert windows[0].start_s == 0.0 and windows[1].start_s == 300.0

    def test_short_trace_single_window(self):
        ts = np.arange(0.0, 10.0, 0.5)
        windows = segment(make_trace(ts), WindowConfig(window_s=300))
        assert len(windows) == 1
        assert len(windows[0]) == len(ts)

    def test_empty_trace_rejected(self):
        trace = make_trace([0.0])
        empty = ClientTrace(CLIENT, [], [], [])
        with pytest.raises(EmptyTraceError):
            segment(empty, WindowConfig())
        assert len(segment(trace, WindowConfig())) == 1

    def test_membership_matches_bruteforce_interval_oracle(self, rng):
        ts = np.sort(rng.random(5000) * 1500.0)
        trace = make_trace(ts)
        cfg = WindowConfig(window_s=300, stride_s=150)
        windows = segment(trace, cfg)
        # oracle: exhaustive membership per (packet, window-start) pair
        t0 = ts[0]
        starts = [t0 + k * 150.0 for k in range(int((ts[-1] - t0) / 150.0) + 1)]
        for start in starts:
            expected = [t for t in ts if start <= t < start + 300.0]
            got = [w for w in windows if w.start_s == start]
            if expected:
                assert len(got) == 1
                assert np.array_equal(got[0].timestamps, np.array(expected))
            else:
                assert got == []
        # every emitted window is non-empty and within bounds
        for w in windows:
            assert len(w) >= 1
            assert (w.timestamps >= w.start_s).all()
            assert (w.timestamps < w.start_s + w.duration_s).all()

    def test_non_overlapping_windows_partition_packets(self, rng):
        ts = np.sort(rng.random(2000) * 900.0)
        trace = make_trace(ts)
        windows = segment(trace, WindowConfig(window_s=300, stride_s=300))
        assert sum(len(w) for w in windows) == len(ts)
        seen = np.concatenate([w.timestamps for w in windows])
        assert np.array_equal(np.sort(seen), ts)

    def test_shift_invariance(self, rng):
        ts = np.sort(rng.random(300) * 500.0)
        cfg = WindowConfig(window_s=120, stride_s=60)
        base = segment(make_trace(ts), cfg)
        shifted = segment(make_trace(ts + 1000.0), cfg)
        assert len(base) == len(shifted)
        for a, b in zip(base, shifted):
            assert np.allclose(a.timestamps + 1000.0, b.timestamps)
            assert np.array_equal(a.sizes, b.sizes)


class TestFilterActive:
    def test_max_60_bytes_discarded_at_tau_66(self):
        w = make_window([60, 55, 40])
        assert filter_active([w], 66) == []

    def test_single_large_packet_retained(self):
        w = make_window([1500])
        assert filter_active([w], 66) == [w]

    def test_boundary_exactly_tau_discarded(self):
        # strict comparison: a 66-byte packet does not clear tau = 66
        assert filter_active([make_window([66])], 66) == []
        assert filter_active([make_window([67])], 66) != []

    def test_matches_bruteforce_scan(self, rng):
        windows = [
            make_window(rng.integers(1, 200, size=int(rng.integers(1, 30))))
            for _ in range(20)
        ]
        kept = filter_active(windows, 66)
        oracle = [w for w in windows if max(w.sizes) > 66]
        assert kept == oracle

    def test_idempotent(self, rng):
        windows = [
            make_window(rng.integers(1, 200, size=int(rng.integers(1, 30))))
            for _ in range(20)
        ]
        once = filter_active(windows, 66)
        assert filter_active(once, 66) == once

    def test_trace_level_activity(self):
        assert trace_is_active(make_trace([0.0], sizes=[100]), 66)
        assert not trace_is_active(make_trace([0.0], sizes=[60]), 66)


@given(
    st.lists(st.floats(min_value=0, max_value=2000, allow_nan=False), min_size=1, max_size=200),
    st.integers(min_value=1, max_value=10),
)
def test_segment_covers_every_packet_once_with_unit_stride_ratio(raw_ts, window_mult):
    ts = np.sort(np.asarray(raw_ts))
    window = 50.0 * window_mult
    windows = segment(make_trace(ts), WindowConfig(window_s=window, stride_s=window))
    assert sum(len(w) for w in windows) == len(ts)
