"""Per-window feature views: flow-level statistics and packet-level structure.

Flow vector layout (39 values): 5 packet-rate statistics over one-second
bins, then 17 uplink size statistics, then 17 downlink size statistics.
Packet vector layout (29 values): 25 normalized length-histogram bins of
width 64 bytes covering [0, 1600) with the last bin open-ended, then first
and last packet size, then first and last inter-arrival gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, EmptyWindowError
from .segmentation import TrafficWindow

HIST_BIN_WIDTH = 64
HIST_N_BINS = 25
DECILES = (10, 20, 30, 40, 50, 60, 70, 80, 90)

FLOW_DIM = 5 + 17 + 17
PACKET_DIM = HIST_N_BINS + 4

_STAT_NAMES = ("mean", "max", "min", "variance", "std", "mad", "skewness", "kurtosis") + tuple(
    f"p{q}" for q in DECILES
)


@dataclass(frozen=True)
class StatBlock:
    """Summary statistics of a value sequence (population moments)."""

    mean: float
    max: float
    min: float
    variance: float
    std: float
    median: float
    mad: float
    skewness: float
    kurtosis: float
    deciles: tuple[float, ...]  # 10th..90th percentiles

    def as_vector(self) -> np.ndarray:
        # 17 values; the median is redundant with the 50th percentile and is
        # not repeated in the vector.
        return np.array(
            [
                self.mean,
                self.max,
                self.min,
                self.variance,
                self.std,
                self.mad,
                self.skewness,
                self.kurtosis,
                *self.deciles,
            ],
            dtype=np.float64,
        )

    @staticmethod
    def zeros() -> "StatBlock":
        """Sentinel for an empty direction: all fields zero."""
        return StatBlock(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, (0.0,) * 9)


@dataclass(frozen=True)
class FlowFeatures:
    rate_stats: tuple[float, float, float, float, float]  # mean, max, min, median, std
    up_size: StatBlock
    down_size: StatBlock

    def as_vector(self) -> np.ndarray:
        vec = np.concatenate(
            [
                np.array(self.rate_stats, dtype=np.float64),
                self.up_size.as_vector(),
                self.down_size.as_vector(),
            ]
        )
        assert vec.shape == (FLOW_DIM,)
        return vec

    @staticmethod
    def column_names() -> list[str]:
        names = ["rate_mean", "rate_max", "rate_min", "rate_median", "rate_std"]
        names += [f"up_{s}" for s in _STAT_NAMES]
        names += [f"down_{s}" for s in _STAT_NAMES]
        return names


@dataclass(frozen=True)
class PacketFeatures:
    length_histogram: tuple[float, ...]  # 25 normalized bin frequencies
    first_size: float
    last_size: float
    first_iat: float
    last_iat: float

    def as_vector(self) -> np.ndarray:
        vec = np.array(
            list(self.length_histogram)
            + [self.first_size, self.last_size, self.first_iat, self.last_iat],
            dtype=np.float64,
        )
        assert vec.shape == (PACKET_DIM,)
        return vec

    @staticmethod
    def column_names() -> list[str]:
        names = [f"hist_{i * HIST_BIN_WIDTH:04d}" for i in range(HIST_N_BINS)]
        names += ["first_size", "last_size", "first_iat", "last_iat"]
        return names


def summary_stats(values: np.ndarray) -> StatBlock:
    """Population moments plus decile grid of a non-empty value sequence.

    Skewness is m3/m2^1.5 and kurtosis m4/m2^2 (not excess); both are 0 by
    convention when the values are constant. Percentiles interpolate
    linearly between order statistics.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("summary_stats needs at least one value")
    mean = float(np.mean(values))
    centered = values - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        skew = kurt = 0.0
    else:
        skew = float(np.mean(centered**3) / m2**1.5)
        kurt = float(np.mean(centered**4) / m2**2)
    median = float(np.median(values))
    deciles = tuple(float(x) for x in np.percentile(values, DECILES, method="linear"))
    return StatBlock(
        mean=mean,
        max=float(np.max(values)),
        min=float(np.min(values)),
        variance=m2,
        std=math.sqrt(m2),
        median=median,
        mad=float(np.median(np.abs(values - median))),
        skewness=skew,
        kurtosis=kurt,
        deciles=deciles,
    )


def flow_features(window: TrafficWindow) -> FlowFeatures:
    """Packet-rate statistics plus directional size statistics."""
    if len(window) == 0:
        raise EmptyWindowError("flow_features needs a non-empty window")
    n_bins = int(math.ceil(window.duration_s))
    rel = window.timestamps - window.start_s
    idx = np.minimum(np.floor(rel).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.float64)
    rate = (
        float(np.mean(counts)),
        float(np.max(counts)),
        float(np.min(counts)),
        float(np.median(counts)),
        float(np.std(counts)),
    )
    up_sizes = window.sizes[window.uplink]
    down_sizes = window.sizes[~window.uplink]
    up = summary_stats(up_sizes) if up_sizes.size else StatBlock.zeros()
    down = summary_stats(down_sizes) if down_sizes.size else StatBlock.zeros()
    return FlowFeatures(rate_stats=rate, up_size=up, down_size=down)


def packet_features(window: TrafficWindow) -> PacketFeatures:
    """Direction-independent length histogram plus first/last edge stats."""
    if len(window) == 0:
        raise EmptyWindowError("packet_features needs a non-empty window")
    bins = np.minimum(window.sizes // HIST_BIN_WIDTH, HIST_N_BINS - 1)
    hist = np.bincount(bins, minlength=HIST_N_BINS).astype(np.float64) / len(window)
    first_iat = float(window.timestamps[0] - window.start_s)
    last_iat = float(window.timestamps[-1] - window.timestamps[-2]) if len(window) >= 2 else 0.0
    return PacketFeatures(
        length_histogram=tuple(float(x) for x in hist),
        first_size=float(window.sizes[0]),
        last_size=float(window.sizes[-1]),
        first_iat=first_iat,
        last_iat=last_iat,
    )


def feature_matrix(windows: list[TrafficWindow]) -> tuple[np.ndarray, np.ndarray]:
    """Stack both views over a window list: (n x 39 flow, n x 29 packet)."""
    flow = np.empty((len(windows), FLOW_DIM), dtype=np.float64)
    pkt = np.empty((len(windows), PACKET_DIM), dtype=np.float64)
    for i, w in enumerate(windows):
        flow[i] = flow_features(w).as_vector()
        pkt[i] = packet_features(w).as_vector()
    return flow, pkt
