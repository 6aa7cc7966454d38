"""Fixed-duration observation windows and the activity-threshold filter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyTraceError
from .ingest import ClientTrace
from .labels import ArchLabel

DEFAULT_WINDOW_S = 300.0
DEFAULT_TAU_BYTES = 66


@dataclass(frozen=True)
class WindowConfig:
    window_s: float = DEFAULT_WINDOW_S
    stride_s: float | None = None  # None -> window_s (non-overlapping)
    tau_bytes: int = DEFAULT_TAU_BYTES

    def __post_init__(self):
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        stride = self.window_s if self.stride_s is None else self.stride_s
        if stride <= 0:
            raise ValueError("stride_s must be positive")
        if stride > self.window_s:
            raise ValueError("stride_s > window_s would drop packets silently")
        if self.tau_bytes < 1:
            raise ValueError("tau_bytes must be a positive integer")

    @property
    def effective_stride_s(self) -> float:
        return self.window_s if self.stride_s is None else self.stride_s


@dataclass(frozen=True)
class WindowOrigin:
    client_id: str
    trace_id: str
    window_index: int

    @property
    def window_id(self) -> str:
        return f"{self.trace_id}:w{self.window_index}"


@dataclass(frozen=True)
class TrafficWindow:
    """Half-open slice [start_s, start_s + duration_s) of a client trace."""

    start_s: float
    duration_s: float
    timestamps: np.ndarray
    sizes: np.ndarray
    uplink: np.ndarray
    origin: WindowOrigin
    label: ArchLabel | None = field(default=None)

    def __len__(self) -> int:
        return len(self.timestamps)

    @property
    def max_size(self) -> int:
        return int(self.sizes.max()) if len(self.sizes) else 0


def segment(trace: ClientTrace, cfg: WindowConfig) -> list[TrafficWindow]:
    """Cut a trace into windows starting at trace start + k*stride.

    Windows use half-open membership; only windows containing at least one
    packet are emitted.
    """
    if len(trace) == 0:
        raise EmptyTraceError("cannot segment an empty trace")
    stride = cfg.effective_stride_s
    t0 = float(trace.timestamps[0])
    t_last = float(trace.timestamps[-1])

    windows: list[TrafficWindow] = []
    k = 0
    while True:
        start = t0 + k * stride
        if start > t_last:
            break
        lo = int(np.searchsorted(trace.timestamps, start, side="left"))
        hi = int(np.searchsorted(trace.timestamps, start + cfg.window_s, side="left"))
        if hi > lo:
            windows.append(
                TrafficWindow(
                    start_s=start,
                    duration_s=cfg.window_s,
                    timestamps=trace.timestamps[lo:hi],
                    sizes=trace.sizes[lo:hi],
                    uplink=trace.uplink[lo:hi],
                    origin=WindowOrigin(trace.client_id, trace.trace_id, k),
                    label=trace.label,
                )
            )
        k += 1
    return windows


def filter_active(windows: list[TrafficWindow], tau_bytes: int = DEFAULT_TAU_BYTES) -> list[TrafficWindow]:
    """Keep windows holding at least one packet strictly larger than tau_bytes."""
    return [w for w in windows if w.max_size > tau_bytes]


def trace_is_active(trace: ClientTrace, tau_bytes: int = DEFAULT_TAU_BYTES) -> bool:
    """Trace-level activity test: any packet strictly larger than tau_bytes."""
    return len(trace) > 0 and int(trace.sizes.max()) > tau_bytes
