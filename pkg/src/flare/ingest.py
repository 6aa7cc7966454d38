"""Capture parsing and canonical client traces.

Capture files are CSV with the header ``timestamp,size,src_mac,dst_mac``:
timestamps in decimal seconds (microsecond precision), sizes in bytes,
stations as lowercase colon-separated hex MACs. Canonical trace files reuse
the same CSV body, preceded by ``# key=value`` metadata lines.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    MalformedRowError,
    MissingHeaderError,
    NegativeTimestampError,
    NonNumericFieldError,
    UnknownStationError,
    ZeroSizeError,
)
from .labels import ArchLabel, ModelFamily

CAPTURE_HEADER = "timestamp,size,src_mac,dst_mac"

_MAC_RE = re.compile(r"^[0-9a-f]{2}(:[0-9a-f]{2}){5}$")


class Direction(str, Enum):
    UPLINK = "uplink"
    DOWNLINK = "downlink"


@dataclass(frozen=True)
class PacketRecord:
    """One observed frame."""

    timestamp_s: float
    size_bytes: int
    direction: Direction
    station_id: str

    def __post_init__(self):
        if self.size_bytes < 1:
            raise ValueError("size_bytes must be >= 1")
        if self.timestamp_s < 0:
            raise ValueError("timestamp_s must be >= 0")


@dataclass(frozen=True)
class CaptureRow:
    timestamp_s: float
    size_bytes: int
    src_station: str
    dst_station: str


@dataclass
class RawCapture:
    """Parsed capture: one row per packet, timestamps rebased to start at 0."""

    rows: list[CaptureRow]

    def __len__(self) -> int:
        return len(self.rows)

    def stations(self) -> set[str]:
        out: set[str] = set()
        for row in self.rows:
            out.add(row.src_station)
            out.add(row.dst_station)
        return out


class ClientTrace:
    """Time-ordered packets of one client, stored columnar.

    All packets belong to the same client station; ``uplink[i]`` is True when
    the client sent packet ``i``. Timestamps are non-decreasing.
    """

    def __init__(
        self,
        client_id: str,
        timestamps: np.ndarray,
        sizes: np.ndarray,
        uplink: np.ndarray,
        label: ArchLabel | None = None,
        meta: dict[str, str] | None = None,
    ):
        timestamps = np.asarray(timestamps, dtype=np.float64)
        sizes = np.asarray(sizes, dtype=np.int64)
        uplink = np.asarray(uplink, dtype=bool)
        if not (len(timestamps) == len(sizes) == len(uplink)):
            raise ValueError("column lengths differ")
        if len(timestamps) and np.any(np.diff(timestamps) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if len(timestamps) and timestamps[0] < 0:
            raise ValueError("timestamps must be non-negative")
        if np.any(sizes < 1):
            raise ValueError("sizes must be >= 1")
        self.client_id = client_id
        self.timestamps = timestamps
        self.sizes = sizes
        self.uplink = uplink
        self.label = label
        self.meta = dict(meta or {})

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def trace_id(self) -> str:
        return self.meta.get("trace_id", self.client_id)

    @property
    def duration_s(self) -> float:
        if len(self) == 0:
            return 0.0
        return float(self.timestamps[-1] - self.timestamps[0])

    def packet(self, i: int) -> PacketRecord:
        return PacketRecord(
            timestamp_s=float(self.timestamps[i]),
            size_bytes=int(self.sizes[i]),
            direction=Direction.UPLINK if self.uplink[i] else Direction.DOWNLINK,
            station_id=self.client_id,
        )

    @property
    def packets(self) -> Iterator[PacketRecord]:
        return (self.packet(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ClientTrace):
            return NotImplemented
        return (
            self.client_id == other.client_id
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.sizes, other.sizes)
            and np.array_equal(self.uplink, other.uplink)
            and self.label == other.label
        )


def _normalize_station(field: str, line: int) -> str:
    station = field.strip().lower()
    if not _MAC_RE.match(station):
        raise MalformedRowError(f"bad station id {field.strip()!r}", line)
    return station


def parse_capture_csv(source: str | bytes | io.IOBase) -> RawCapture:
    """Parse a capture CSV into rows, rebasing timestamps to start at 0.

    Raises on the first malformed row, naming its 1-based line number.
    """
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")

    lines = text.splitlines()
    if not lines or lines[0].strip() != CAPTURE_HEADER:
        raise MissingHeaderError(f"expected header {CAPTURE_HEADER!r}")

    ts: list[float] = []
    rows: list[CaptureRow] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 4:
            raise MalformedRowError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            t = float(parts[0])
        except ValueError:
            raise NonNumericFieldError(f"bad timestamp {parts[0]!r}", lineno) from None
        try:
            size = int(parts[1])
        except ValueError:
            raise NonNumericFieldError(f"bad size {parts[1]!r}", lineno) from None
        if t < 0:
            raise NegativeTimestampError(f"timestamp {t}", lineno)
        if size < 1:
            raise ZeroSizeError(f"size {size}", lineno)
        src = _normalize_station(parts[2], lineno)
        dst = _normalize_station(parts[3], lineno)
        ts.append(t)
        rows.append(CaptureRow(t, size, src, dst))

    if rows:
        base = min(ts)
        if base != 0.0:
            rows = [
                CaptureRow(round(r.timestamp_s - base, 6), r.size_bytes, r.src_station, r.dst_station)
                for r in rows
            ]
    return RawCapture(rows)


def extract_client_trace(raw: RawCapture, ap_station: str, client_station: str) -> ClientTrace:
    """Keep only client<->AP rows, tag direction, and sort by time (stable)."""
    ap_station = ap_station.strip().lower()
    client_station = client_station.strip().lower()
    stations = raw.stations()
    if client_station not in stations:
        raise UnknownStationError(client_station)
    if ap_station not in stations:
        raise UnknownStationError(ap_station)

    kept = [
        row
        for row in raw.rows
        if {row.src_station, row.dst_station} == {client_station, ap_station}
    ]
    order = np.argsort([row.timestamp_s for row in kept], kind="stable") if kept else []
    ts = np.array([kept[i].timestamp_s for i in order], dtype=np.float64)
    sizes = np.array([kept[i].size_bytes for i in order], dtype=np.int64)
    up = np.array([kept[i].src_station == client_station for i in order], dtype=bool)
    return ClientTrace(client_station, ts, sizes, up, meta={"ap_id": ap_station})


def inter_arrival_times(trace: ClientTrace) -> np.ndarray:
    """Consecutive timestamp differences; empty for a single-packet trace."""
    if len(trace) == 0:
        raise ValueError("trace has no packets")
    return np.diff(trace.timestamps)


# --- canonical trace files ---------------------------------------------------

def _meta_block(trace: ClientTrace) -> dict[str, str]:
    meta = {"client_id": trace.client_id}
    meta.update(trace.meta)
    if trace.label is not None:
        meta["family"] = trace.label.family.value
        meta["model"] = trace.label.model_name
        meta["dataset"] = trace.label.dataset_name
    return meta


def write_trace(trace: ClientTrace, path: str | Path) -> None:
    """Write a canonical trace file: ``# key=value`` header block plus CSV."""
    ap = trace.meta.get("ap_id", "02:00:00:00:ff:fe")
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in _meta_block(trace).items():
            fh.write(f"# {key}={value}\n")
        fh.write(CAPTURE_HEADER + "\n")
        for i in range(len(trace)):
            src, dst = (trace.client_id, ap) if trace.uplink[i] else (ap, trace.client_id)
            fh.write(f"{trace.timestamps[i]:.6f},{trace.sizes[i]},{src},{dst}\n")


def read_trace(path: str | Path) -> ClientTrace:
    """Read a canonical trace file back, verbatim (no rebasing)."""
    meta: dict[str, str] = {}
    body_lines: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.rstrip("\n")
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value
            else:
                body_lines.append(line)

    if not body_lines or body_lines[0].strip() != CAPTURE_HEADER:
        raise MissingHeaderError(f"expected header {CAPTURE_HEADER!r}")
    client = meta.get("client_id")
    if client is None:
        raise MalformedRowError("missing '# client_id=' metadata line")

    ts, sizes, up = [], [], []
    for lineno, line in enumerate(body_lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise MalformedRowError(f"expected 4 fields, got {len(parts)}", lineno)
        ts.append(float(parts[0]))
        sizes.append(int(parts[1]))
        up.append(parts[2].strip().lower() == client)

    label = None
    if "family" in meta:
        label = ArchLabel(
            family=ModelFamily(meta["family"]),
            model_name=meta.get("model", ""),
            dataset_name=meta.get("dataset", ""),
        )
    trace_meta = {
        k: v for k, v in meta.items() if k not in {"client_id", "family", "model", "dataset"}
    }
    return ClientTrace(
        client,
        np.array(ts, dtype=np.float64),
        np.array(sizes, dtype=np.int64),
        np.array(up, dtype=bool),
        label=label,
        meta=trace_meta,
    )


def trace_from_records(
    client_id: str,
    records: Iterable[PacketRecord],
    label: ArchLabel | None = None,
    meta: dict[str, str] | None = None,
) -> ClientTrace:
    """Convenience constructor from row objects (small inputs, tests)."""
    recs = list(records)
    return ClientTrace(
        client_id,
        np.array([r.timestamp_s for r in recs], dtype=np.float64),
        np.array([r.size_bytes for r in recs], dtype=np.int64),
        np.array([r.direction == Direction.UPLINK for r in recs], dtype=bool),
        label=label,
        meta=meta,
    )
