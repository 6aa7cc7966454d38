import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flare.errors import (
    MalformedRowError,
    MissingHeaderError,
    NegativeTimestampError,
    NonNumericFieldError,
    UnknownStationError,
    ZeroSizeError,
)
from flare.ingest import (
    CAPTURE_HEADER,
    ClientTrace,
    Direction,
    extract_client_trace,
    inter_arrival_times,
    parse_capture_csv,
    read_trace,
    write_trace,
)
from flare.labels import ArchLabel, ModelFamily

AP = "02:00:00:00:ff:fe"
CLIENT_A = "02:00:00:00:00:01"
CLIENT_B = "02:00:00:00:00:02"


def csv_text(rows):
    return CAPTURE_HEADER + "\n" + "\n".join(",".join(str(f) for f in row) for row in rows) + "\n"


class TestParseCapture:
    def test_header_only_gives_zero_rows(self):
        raw = parse_capture_csv(CAPTURE_HEADER + "\n")
        assert len(raw) == 0

    def test_three_rows_in_input_order(self):
        text = csv_text(
            [
                (0.0, 100, CLIENT_A, AP),
                (0.5, 200, AP, CLIENT_A),
                (1.0, 300, CLIENT_A, AP),
            ]
        )
        raw = parse_capture_csv(text)
        assert len(raw) == 3
        assert [r.size_bytes for r in raw.rows] == [100, 200, 300]
        assert [r.timestamp_s for r in raw.rows] == [0.0, 0.5, 1.0]

    def test_zero_size_reports_line(self):
        text = csv_text([(0.0, 100, CLIENT_A, AP), (0.5, 0, CLIENT_A, AP)])
        with pytest.raises(ZeroSizeError) as exc:
            parse_capture_csv(text)
        assert exc.value.line == 3  # header is line 1

    def test_missing_header(self):
        with pytest.raises(MissingHeaderError):
            parse_capture_csv("ts,size,a,b\n0.0,1,%s,%s\n" % (CLIENT_A, AP))

    def test_non_numeric_field_reports_line(self):
        text = csv_text([(0.0, 100, CLIENT_A, AP), ("oops", 50, CLIENT_A, AP)])
        with pytest.raises(NonNumericFieldError) as exc:
            parse_capture_csv(text)
        assert exc.value.line == 3

    def test_negative_timestamp(self):
        with pytest.raises(NegativeTimestampError):
            parse_capture_csv(csv_text([(-1.0, 100, CLIENT_A, AP)]))

    def test_bad_station(self):
        with pytest.raises(MalformedRowError):
            parse_capture_csv(csv_text([(0.0, 100, "nonsense", AP)]))

    def test_bytes_input(self):
        raw = parse_capture_csv(csv_text([(0.0, 100, CLIENT_A, AP)]).encode())
        assert len(raw) == 1

    def test_rebase_to_zero(self):
        raw = parse_capture_csv(csv_text([(5.0, 10, CLIENT_A, AP), (6.5, 10, AP, CLIENT_A)]))
        assert raw.rows[0].timestamp_s == 0.0
        assert raw.rows[1].timestamp_s == 1.5


class TestExtractClientTrace:
    def mixed_capture(self):
        rows = [
            (0.0, 100, CLIENT_A, AP),
            (0.1, 110, CLIENT_B, AP),
            (0.2, 120, AP, CLIENT_A),
            (0.3, 130, AP, CLIENT_B),
            (0.4, 140, CLIENT_B, AP),
            (0.5, 150, CLIENT_A, AP),
            (0.6, 160, CLIENT_B, AP),
            (0.7, 170, AP, CLIENT_B),
            (0.8, 180, AP, CLIENT_A),
            (0.9, 190, CLIENT_B, AP),
        ]
        return parse_capture_csv(csv_text(rows)), rows

    def test_filters_on_station_pair(self):
        raw, _ = self.mixed_capture()
        trace = extract_client_trace(raw, AP, CLIENT_A)
        assert len(trace) == 4
        assert trace.client_id == CLIENT_A

    def test_direction_tagging(self):
        raw, _ = self.mixed_capture()
        trace = extract_client_trace(raw, AP, CLIENT_A)
        assert trace.packet(0).direction == Direction.UPLINK  # src = client
        assert trace.packet(1).direction == Direction.DOWNLINK

    def test_matches_bruteforce_filter(self):
        raw, rows = self.mixed_capture()
        trace = extract_client_trace(raw, AP, CLIENT_A)
        expected = [r for r in rows if {r[2], r[3]} == {CLIENT_A, AP}]
        assert len(trace) == len(expected)
        assert list(trace.sizes) == [r[1] for r in expected]
        # order preserved (input was time-sorted)
        assert list(trace.timestamps) == [r[0] for r in expected]

    def test_unknown_station(self):
        raw, _ = self.mixed_capture()
        with pytest.raises(UnknownStationError):
            extract_client_trace(raw, AP, "02:00:00:00:00:99")

    def test_direction_partition(self):
        raw, _ = self.mixed_capture()
        trace = extract_client_trace(raw, AP, CLIENT_A)
        assert trace.uplink.sum() + (~trace.uplink).sum() == len(trace)

    def test_output_never_longer_than_input(self, rng):
        stations = [CLIENT_A, CLIENT_B, AP]
        rows = []
        t = 0.0
        for _ in range(50):
            t += float(rng.random())
            src, dst = rng.choice(3, size=2, replace=False)
            rows.append((round(t, 6), int(rng.integers(1, 1500)), stations[src], stations[dst]))
        raw = parse_capture_csv(csv_text(rows))
        trace = extract_client_trace(raw, AP, CLIENT_A)
        assert len(trace) <= len(raw)
        for i in range(len(trace)):
            assert trace.packet(i).station_id == CLIENT_A


class TestInterArrivalTimes:
    def test_single_packet(self):
        trace = ClientTrace(CLIENT_A, [0.0], [100], [True])
        assert len(inter_arrival_times(trace)) == 0

    def test_simple_subtraction(self):
        trace = ClientTrace(CLIENT_A, [0.0, 0.5, 2.0], [1, 1, 1], [True, True, True])
        assert inter_arrival_times(trace).tolist() == [0.5, 1.5]

    def test_matches_elementwise_difference_oracle(self, rng):
        ts = np.sort(rng.random(1000) * 500.0)
        trace = ClientTrace(CLIENT_A, ts, np.ones(1000, dtype=int), np.ones(1000, dtype=bool))
        iats = inter_arrival_times(trace)
        oracle = [ts[i + 1] - ts[i] for i in range(len(ts) - 1)]
        assert np.array_equal(iats, np.array(oracle))
        assert (iats >= 0).all()


class TestTraceRoundTrip:
    def test_write_read_identical(self, tmp_path):
        ts = np.round(np.sort(np.random.default_rng(3).random(200) * 100), 6)
        sizes = np.random.default_rng(4).integers(1, 1500, size=200)
        up = np.random.default_rng(5).random(200) < 0.5
        label = ArchLabel(ModelFamily.CNN, "resnet18", "cifar10")
        trace = ClientTrace(CLIENT_A, ts, sizes, up, label=label, meta={"trace_id": "t0"})
        path = tmp_path / "trace.csv"
        write_trace(trace, path)
        back = read_trace(path)
        assert back == trace
        assert back.meta["trace_id"] == "t0"

    def test_write_read_write_bytes_stable(self, tmp_path):
        trace = ClientTrace(CLIENT_A, [0.0, 1.25], [100, 200], [True, False])
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace(trace, p1)
        write_trace(read_trace(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()


@given(
    st.lists(
        st.tuples(
            st.floats(min_value=0, max_value=1e6, allow_nan=False),
            st.integers(min_value=1, max_value=3000),
            st.booleans(),
        ),
        min_size=1,
        max_size=60,
    )
)
def test_trace_accepts_any_sorted_packets(rows):
    rows.sort(key=lambda r: r[0])
    trace = ClientTrace(
        CLIENT_A,
        [r[0] for r in rows],
        [r[1] for r in rows],
        [r[2] for r in rows],
    )
    assert len(trace) == len(rows)
    assert int(trace.uplink.sum()) + int((~trace.uplink).sum()) == len(trace)
