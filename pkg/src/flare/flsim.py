"""Deterministic synthetic FL client traffic and the resource-denial emulator.

A session is an event loop over training rounds: downlink broadcast of the
model payload (4 bytes per trainable parameter) fragmented at the link MSS,
a local-compute gap with lognormal jitter, a (possibly bursty) uplink
update, and in synchronous mode a server-wait gap. Periodic-profile models
interleave small bidirectional control packets; low-rate background frames
of at most 66 bytes exercise the activity filter. Everything is driven by a
single per-session RNG, so a spec reproduces its trace bit-for-bit.
"""

from __future__ import annotations

import dataclasses
import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvalidSpecError, InvalidThroughputError
from .ingest import ClientTrace, write_trace
from .labels import ArchLabel, ModelFamily, register_model_family

BYTES_PER_PARAM = 4
BURST_PACKETS = 64          # uplink packets sent back-to-back per burst
BACKGROUND_RATE_HZ = 2.0    # control frames per second, sizes 40..66
SYNC_WAIT_FRAC = 0.3        # server-wait gap as a fraction of compute time
FEDPROX_COMPUTE_FACTOR = 1.15
TIMESTAMP_DECIMALS = 6


class AggregationMode(str, Enum):
    FEDAVG = "fedavg"
    WEIGHTED_FEDAVG = "weighted_fedavg"
    FEDPROX = "fedprox"


class SyncMode(str, Enum):
    SYNC = "sync"
    ASYNC = "async"


@dataclass(frozen=True)
class ModelProfile:
    family: ModelFamily
    name: str
    theta: int                      # trainable parameters
    rounds_to_converge: int
    compute_s_per_round: float
    burstiness: float = 1.0        # uplink peak-to-mean rate ratio
    periodicity_s: float | None = None
    dataset_name: str = "synthetic"

    def __post_init__(self):
        if self.theta < 1:
            raise InvalidSpecError("theta must be >= 1")
        if self.rounds_to_converge < 1:
            raise InvalidSpecError("rounds_to_converge must be >= 1")
        if self.compute_s_per_round <= 0:
            raise InvalidSpecError("compute_s_per_round must be positive")
        if self.burstiness < 1.0:
            raise InvalidSpecError("burstiness must be >= 1")
        if self.periodicity_s is not None and self.periodicity_s <= 0:
            raise InvalidSpecError("periodicity_s must be positive")


@dataclass(frozen=True)
class ClientProfile:
    name: str
    compute_multiplier: float = 1.0
    jitter_frac: float = 0.1

    def __post_init__(self):
        if self.compute_multiplier <= 0:
            raise InvalidSpecError("compute_multiplier must be positive")
        if not (0.0 <= self.jitter_frac < 1.0):
            raise InvalidSpecError("jitter_frac must be in [0, 1)")

    @property
    def station_id(self) -> str:
        digest = hashlib.md5(self.name.encode("utf-8")).hexdigest()
        octets = [digest[i : i + 2] for i in range(0, 10, 2)]
        return "02:" + ":".join(octets)


@dataclass(frozen=True)
class LinkProfile:
    throughput_mbps: float
    mss_bytes: int = 1448
    base_latency_ms: float = 2.0

    def __post_init__(self):
        if self.throughput_mbps <= 0:
            raise InvalidSpecError("throughput_mbps must be positive")
        if not (1 <= self.mss_bytes <= 1500):
            raise InvalidSpecError("mss_bytes must be in [1, 1500]")
        if self.base_latency_ms < 0:
            raise InvalidSpecError("base_latency_ms must be non-negative")

    @property
    def bytes_per_s(self) -> float:
        return self.throughput_mbps * 1e6 / 8.0


@dataclass(frozen=True)
class SessionSpec:
    model: ModelProfile
    client: ClientProfile
    link: LinkProfile
    aggregation: AggregationMode = AggregationMode.FEDAVG
    sync_mode: SyncMode = SyncMode.SYNC
    duration_s: float = 900.0
    seed: int = 0

    def __post_init__(self):
        if self.duration_s <= 0:
            raise InvalidSpecError("duration_s must be positive")


def payload_bytes(theta: int) -> int:
    """Bytes per model update: 4 bytes per trainable parameter."""
    if theta < 1:
        raise InvalidSpecError("theta must be >= 1")
    return BYTES_PER_PARAM * theta


def _fragment_sizes(total_bytes: int, mss: int) -> np.ndarray:
    n = math.ceil(total_bytes / mss)
    sizes = np.full(n, mss, dtype=np.int64)
    rem = total_bytes - mss * (n - 1)
    sizes[-1] = rem
    return sizes


def _compute_gap(spec: SessionSpec, rng: np.random.Generator) -> float:
    factor = FEDPROX_COMPUTE_FACTOR if spec.aggregation == AggregationMode.FEDPROX else 1.0
    jitter = math.exp(rng.normal(0.0, spec.client.jitter_frac))
    return spec.model.compute_s_per_round * spec.client.compute_multiplier * factor * jitter


@dataclass
class RoundLedger:
    index: int
    start_s: float
    end_s: float
    dl_data_bytes: int
    ul_data_bytes: int
    dl_control_bytes: int = 0
    ul_control_bytes: int = 0
    complete: bool = True


@dataclass
class SessionLedger:
    payload_bytes: int
    rounds: list[RoundLedger]


def simulate_session(spec: SessionSpec) -> ClientTrace:
    trace, _ = simulate_session_detailed(spec)
    return trace


def simulate_session_detailed(spec: SessionSpec) -> tuple[ClientTrace, SessionLedger]:
    """Generate one labeled client trace plus its per-round byte ledger."""
    rng = np.random.default_rng(spec.seed)
    payload = payload_bytes(spec.model.theta)
    frag = _fragment_sizes(payload, spec.link.mss_bytes)
    frag_f = frag.astype(np.float64)
    byte_s = 1.0 / spec.link.bytes_per_s
    latency = spec.link.base_latency_ms / 1000.0

    times: list[np.ndarray] = []
    sizes: list[np.ndarray] = []
    uplinks: list[np.ndarray] = []
    is_data: list[np.ndarray] = []

    # Round structure: downlink broadcast, compute gap, bursty uplink,
    # optional sync barrier.
    round_rows: list[tuple[int, float, float, float]] = []  # idx, start, end, last_data_ts
    t = float(rng.uniform(0.0, 2.0))
    r = 0
    while t < spec.duration_s:
        start = t
        dl_times = t + latency + np.cumsum(frag_f * byte_s)
        times.append(dl_times)
        sizes.append(frag)
        uplinks.append(np.zeros(len(frag), dtype=bool))
        is_data.append(np.ones(len(frag), dtype=bool))
        t = float(dl_times[-1])

        t += _compute_gap(spec, rng)

        ul_times = np.empty(len(frag), dtype=np.float64)
        pos = 0
        while pos < len(frag):
            group = frag_f[pos : pos + BURST_PACKETS]
            ul_times[pos : pos + len(group)] = t + np.cumsum(group * byte_s)
            t = float(ul_times[pos + len(group) - 1])
            if spec.model.burstiness > 1.0 and pos + len(group) < len(frag):
                pause = (spec.model.burstiness - 1.0) * float(group.sum()) * byte_s
                t += pause * math.exp(rng.normal(0.0, 0.3))
            pos += len(group)
        times.append(ul_times)
        sizes.append(frag)
        uplinks.append(np.ones(len(frag), dtype=bool))
        is_data.append(np.ones(len(frag), dtype=bool))
        last_data = t

        if spec.sync_mode == SyncMode.SYNC:
            wait = SYNC_WAIT_FRAC * spec.model.compute_s_per_round
            t += wait * math.exp(rng.normal(0.0, 0.4))

        round_rows.append((r, start, t, last_data))
        r += 1

    # Periodic bidirectional chatter across the whole session.
    if spec.model.periodicity_s is not None:
        period = spec.model.periodicity_s
        tick = float(rng.uniform(0.0, period))
        chat_times: list[float] = []
        chat_up: list[bool] = []
        while tick < spec.duration_s:
            chat_times.append(tick)
            chat_up.append(True)
            reply = tick + float(rng.uniform(0.005, 0.03))
            chat_times.append(reply)
            chat_up.append(False)
            tick += period * math.exp(rng.normal(0.0, 0.02))
        if chat_times:
            times.append(np.array(chat_times))
            sizes.append(rng.integers(100, 301, size=len(chat_times)))
            uplinks.append(np.array(chat_up, dtype=bool))
            is_data.append(np.zeros(len(chat_times), dtype=bool))

    # Background control frames (<= 66 bytes) at a low Poisson rate.
    n_bg = int(rng.poisson(BACKGROUND_RATE_HZ * spec.duration_s))
    if n_bg:
        bg_times = np.sort(rng.uniform(0.0, spec.duration_s, size=n_bg))
        times.append(bg_times)
        sizes.append(rng.integers(40, 67, size=n_bg))
        uplinks.append(rng.random(n_bg) < 0.5)
        is_data.append(np.zeros(n_bg, dtype=bool))

    all_times = np.round(np.concatenate(times), TIMESTAMP_DECIMALS)
    all_sizes = np.concatenate(sizes).astype(np.int64)
    all_up = np.concatenate(uplinks)
    all_data = np.concatenate(is_data)

    keep = all_times < spec.duration_s
    all_times, all_sizes, all_up, all_data = (
        all_times[keep], all_sizes[keep], all_up[keep], all_data[keep],
    )
    order = np.argsort(all_times, kind="stable")
    all_times, all_sizes, all_up, all_data = (
        all_times[order], all_sizes[order], all_up[order], all_data[order],
    )

    ledger = _build_ledger(
        payload, round_rows, spec.duration_s, all_times, all_sizes, all_up, all_data
    )

    register_model_family(spec.model.name, spec.model.family)
    label = ArchLabel(spec.model.family, spec.model.name, spec.model.dataset_name)
    meta = {
        "ap_id": "02:00:00:00:ff:fe",
        "trace_id": f"{spec.model.name}_{spec.client.name}_s{spec.seed}",
        "client_profile": spec.client.name,
        "aggregation": spec.aggregation.value,
        "sync_mode": spec.sync_mode.value,
        "seed": str(spec.seed),
    }
    trace = ClientTrace(
        spec.client.station_id, all_times, all_sizes, all_up, label=label, meta=meta
    )
    return trace, ledger


def _build_ledger(
    payload: int,
    round_rows: list[tuple[int, float, float, float]],
    duration_s: float,
    times: np.ndarray,
    sizes: np.ndarray,
    uplink: np.ndarray,
    is_data: np.ndarray,
) -> SessionLedger:
    rounds: list[RoundLedger] = []
    for i, (idx, start, end, last_data) in enumerate(round_rows):
        hi = round_rows[i + 1][1] if i + 1 < len(round_rows) else duration_s
        lo_i, hi_i = np.searchsorted(times, [start, hi])
        seg = slice(lo_i, hi_i)
        data = is_data[seg]
        up = uplink[seg]
        sz = sizes[seg]
        rounds.append(
            RoundLedger(
                index=idx,
                start_s=start,
                end_s=end,
                dl_data_bytes=int(sz[data & ~up].sum()),
                ul_data_bytes=int(sz[data & up].sum()),
                dl_control_bytes=int(sz[~data & ~up].sum()),
                ul_control_bytes=int(sz[~data & up].sum()),
                complete=last_data < duration_s,
            )
        )
    return SessionLedger(payload_bytes=payload, rounds=rounds)


def session_spec_from_dict(data: dict) -> SessionSpec:
    """Build a SessionSpec from a scenario-file dictionary."""
    model_d = dict(data["model"])
    model_d["family"] = ModelFamily(model_d["family"])
    return SessionSpec(
        model=ModelProfile(**model_d),
        client=ClientProfile(**data["client"]),
        link=LinkProfile(**data["link"]),
        aggregation=AggregationMode(data.get("aggregation", "fedavg")),
        sync_mode=SyncMode(data.get("sync_mode", "sync")),
        duration_s=float(data.get("duration_s", 900.0)),
        seed=int(data.get("seed", 0)),
    )


# --- corpus generation -------------------------------------------------------

def _derived_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


@dataclass
class Corpus:
    traces: list[ClientTrace]
    manifest: dict

    @property
    def manifest_hash(self) -> str:
        return self.manifest["corpus_hash"]


def make_corpus(
    specs: Sequence[SessionSpec],
    n_per_spec: int,
    seed: int,
    out_dir: str | Path | None = None,
) -> Corpus:
    """Expand spec templates into n_per_spec traces each, with derived seeds.

    When out_dir is given, traces and a manifest.json are written there; the
    manifest hash covers everything except absolute paths, so regeneration
    with the same seed is verifiable.
    """
    if n_per_spec < 1:
        raise InvalidSpecError("n_per_spec must be >= 1")
    traces: list[ClientTrace] = []
    entries: list[dict] = []
    for i, template in enumerate(specs):
        for j in range(n_per_spec):
            spec = dataclasses.replace(template, seed=_derived_seed(seed, i, j))
            trace = simulate_session(spec)
            trace.meta["trace_id"] = (
                f"t{i:02d}_{spec.model.name}_{spec.client.name}_r{j}"
            )
            traces.append(trace)
            entries.append(
                {
                    "file": trace.meta["trace_id"] + ".csv",
                    "trace_id": trace.meta["trace_id"],
                    "family": spec.model.family.value,
                    "model": spec.model.name,
                    "dataset": spec.model.dataset_name,
                    "client_profile": spec.client.name,
                    "client_id": spec.client.station_id,
                    "aggregation": spec.aggregation.value,
                    "sync_mode": spec.sync_mode.value,
                    "duration_s": spec.duration_s,
                    "seed": spec.seed,
                    "n_packets": len(trace),
                }
            )
    manifest = {
        "format": "flare-corpus",
        "version": 1,
        "seed": seed,
        "n_per_spec": n_per_spec,
        "traces": entries,
    }
    manifest["corpus_hash"] = hashlib.sha256(
        json.dumps(manifest, sort_keys=True).encode("utf-8")
    ).hexdigest()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for trace, entry in zip(traces, entries):
            write_trace(trace, out / entry["file"])
        with open(out / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=1, sort_keys=True)
            fh.write("\n")
    return Corpus(traces=traces, manifest=manifest)


# --- default desk-scale profiles ---------------------------------------------

DEFAULT_CLIENT_PROFILES = (
    ClientProfile("orin", compute_multiplier=1.0, jitter_frac=0.10),
    ClientProfile("macbook", compute_multiplier=0.8, jitter_frac=0.06),
    ClientProfile("laptop", compute_multiplier=1.5, jitter_frac=0.14),
)

# Seeded by the measured mean effective throughputs of the two workloads.
DEFAULT_LINK = LinkProfile(throughput_mbps=216.0, mss_bytes=1448, base_latency_ms=2.0)
FAST_LINK = LinkProfile(throughput_mbps=384.0, mss_bytes=1448, base_latency_ms=2.0)

DEFAULT_MODEL_PROFILES = (
    ModelProfile(ModelFamily.CNN, "conv_stack_s", 300_000, 25, 18.0, burstiness=3.0, dataset_name="image32"),
    ModelProfile(ModelFamily.CNN, "conv_resnet_t", 800_000, 30, 26.0, burstiness=4.0, dataset_name="image32"),
    ModelProfile(ModelFamily.CNN, "conv_mobile_t", 500_000, 28, 22.0, burstiness=3.5, dataset_name="image32"),
    ModelProfile(ModelFamily.RNN, "rnn_lstm_s", 40_000, 35, 14.0, periodicity_s=2.0, dataset_name="har_seq"),
    ModelProfile(ModelFamily.RNN, "rnn_gru_s", 60_000, 35, 17.0, periodicity_s=3.0, dataset_name="har_seq"),
    ModelProfile(ModelFamily.RNN, "rnn_bilstm_s", 90_000, 40, 20.0, periodicity_s=2.5, dataset_name="har_seq"),
    ModelProfile(ModelFamily.OTHER, "mlp_tiny", 15_000, 20, 8.0, burstiness=1.0, dataset_name="tabular"),
    ModelProfile(ModelFamily.OTHER, "linear_micro", 2_000, 15, 5.0, burstiness=1.0, dataset_name="tabular"),
)

_AGG_CYCLE = (AggregationMode.FEDAVG, AggregationMode.WEIGHTED_FEDAVG, AggregationMode.FEDPROX)


def default_corpus_specs(duration_s: float = 900.0) -> list[SessionSpec]:
    """8 model profiles x 3 client profiles, aggregation cycled per template."""
    specs = []
    i = 0
    for model in DEFAULT_MODEL_PROFILES:
        for client in DEFAULT_CLIENT_PROFILES:
            specs.append(
                SessionSpec(
                    model=model,
                    client=client,
                    link=DEFAULT_LINK,
                    aggregation=_AGG_CYCLE[i % 3],
                    sync_mode=SyncMode.SYNC,
                    duration_s=duration_s,
                    seed=0,
                )
            )
            i += 1
    return specs


# --- resource-denial attack emulator -----------------------------------------

# Attack-scenario archetypes: payloads large enough that transfer time is a
# meaningful share of the round, so denial has a visible effect.
ATTACK_CNN_PROFILE = ModelProfile(
    ModelFamily.CNN, "attack_cnn", 5_000_000, 30, 30.0, burstiness=4.0, dataset_name="image32"
)
ATTACK_RNN_PROFILE = ModelProfile(
    ModelFamily.RNN, "attack_rnn", 600_000, 40, 8.0, periodicity_s=2.0, dataset_name="har_seq"
)
ATTACK_LINK = LinkProfile(throughput_mbps=100.0, mss_bytes=1448, base_latency_ms=2.0)


def cost_of_attack(n_c: int, b_uncomp_mbps: float, b_denied_mbps: float) -> float:
    """Normalized attack cost: n_c * B_uncompromised / B_denied."""
    if n_c < 1:
        raise InvalidSpecError("n_c must be >= 1")
    if b_uncomp_mbps <= 0 or b_denied_mbps <= 0:
        raise InvalidThroughputError("throughputs must be positive")
    if b_denied_mbps > b_uncomp_mbps:
        raise InvalidThroughputError("denied throughput exceeds uncompromised throughput")
    return n_c * b_uncomp_mbps / b_denied_mbps


@dataclass(frozen=True)
class ThrottleSchedule:
    """Uplink throttle window relative to each observed round start.

    The attacker triggers on the (observable) server broadcast and throttles
    the victim's uplink slot predicted from the assumed model profile; a
    wrong assumption places the window away from the real transmission.
    """

    assumed_model: str
    uplink_lo_s: float
    uplink_hi_s: float


def plan_throttle_schedule(
    assumed: ModelProfile,
    client: ClientProfile,
    link: LinkProfile,
    denial_frac: float,
    slack: float = 0.5,
) -> ThrottleSchedule:
    payload = payload_bytes(assumed.theta)
    dl_est = payload / link.bytes_per_s
    comp_est = assumed.compute_s_per_round * client.compute_multiplier
    ul_est = dl_est * assumed.burstiness
    ul_throttled = ul_est / (1.0 - denial_frac)
    lo = dl_est + comp_est * (1.0 - slack)
    hi = dl_est + comp_est * (1.0 + slack) + 2.0 * ul_throttled
    return ThrottleSchedule(assumed.name, lo, hi)


def _transfer_duration(
    n_bytes: float,
    full_bps: float,
    denied_bps: float,
    t0: float,
    windows: list[tuple[float, float]],
) -> float:
    """Wall-clock of a transfer whose rate drops inside throttle windows."""
    remaining = float(n_bytes)
    t = t0
    while remaining > 1e-12:
        rate = full_bps
        boundary = None
        for lo, hi in windows:
            if lo <= t < hi:
                rate = denied_bps
                boundary = hi
                break
            if t < lo:
                boundary = lo if boundary is None else min(boundary, lo)
        span = remaining / rate
        if boundary is None or t + span <= boundary:
            t += span
            remaining = 0.0
        else:
            remaining -= rate * (boundary - t)
            t = boundary
    return t - t0


def _accuracy(n_rounds: float, rounds_to_converge: int) -> float:
    # Saturating surrogate pinned so 90% is reached exactly at
    # rounds_to_converge: a(n) = 0.99*(1 - exp(-n/tau)), tau = R/ln(11).
    tau = rounds_to_converge / math.log(11.0)
    return 0.99 * (1.0 - math.exp(-n_rounds / tau))


@dataclass
class ThrottleReport:
    baseline_time_s: float
    attacked_time_s: float
    baseline_rounds: float
    attacked_rounds: float
    delay_frac: float
    cost: float
    n_attacked: int
    denial_frac: float
    sync_mode: str
    schedule: str  # "continuous" or the assumed model name


def _client_round_parts(
    spec: SessionSpec,
    rng: np.random.Generator,
    round_start: float,
    throttle: tuple[float, ThrottleSchedule | None] | None,
) -> tuple[float, float, float]:
    """(downlink_s, compute_s, uplink_s) for one round of one client.

    ``throttle`` is (denial_frac, schedule); a None schedule means the link
    is denied continuously in both directions.
    """
    payload = payload_bytes(spec.model.theta)
    full = spec.link.bytes_per_s
    comp = _compute_gap(spec, rng)
    # Burstiness spreads the uplink over a proportionally longer wall slot.
    ul_rate = full / spec.model.burstiness

    if throttle is None:
        dl = payload / full
        ul = payload / ul_rate
        return dl, comp, ul

    denial, schedule = throttle
    denied_factor = 1.0 - denial
    if schedule is None:
        dl = payload / (full * denied_factor)
        ul = payload / (ul_rate * denied_factor)
        return dl, comp, ul

    windows = [(round_start + schedule.uplink_lo_s, round_start + schedule.uplink_hi_s)]
    dl = payload / full  # scheduled attack targets the victim's uplink slot
    ul_start = round_start + dl + comp
    ul = _transfer_duration(payload, ul_rate, ul_rate * denied_factor, ul_start, windows)
    return dl, comp, ul


def _run_session_group(
    specs: Sequence[SessionSpec],
    attacked: set[str],
    denial_frac: float,
    sync_mode: SyncMode,
    schedule: ThrottleSchedule | None,
    rounds_to_converge: int,
    max_rounds: int,
) -> tuple[float, float]:
    """Convergence (time_s, rounds) of one multi-client FL application."""
    rngs = [np.random.default_rng([spec.seed, 7]) for spec in specs]
    k = len(specs)
    target = float(rounds_to_converge)

    def throttle_for(spec: SessionSpec):
        if denial_frac == 0.0 or spec.client.name not in attacked:
            return None
        return (denial_frac, schedule)

    if sync_mode == SyncMode.SYNC:
        t = 0.0
        n = 0
        while n < max_rounds:
            finish = []
            for spec, rng in zip(specs, rngs):
                dl, comp, ul = _client_round_parts(spec, rng, t, throttle_for(spec))
                finish.append(t + dl + comp + ul)
            t = max(finish)
            n += 1
            if _accuracy(n, rounds_to_converge) >= 0.90:
                return t, float(n)
        raise InvalidSpecError(f"no convergence within {max_rounds} rounds")

    # Async: the server aggregates each update on arrival; each update
    # advances training by 1/K rounds and the sender restarts immediately.
    heap: list[tuple[float, int]] = []
    for i, (spec, rng) in enumerate(zip(specs, rngs)):
        dl, comp, ul = _client_round_parts(spec, rng, 0.0, throttle_for(spec))
        heapq.heappush(heap, (dl + comp + ul, i))
    n = 0.0
    updates = 0
    while updates < max_rounds * k:
        t, i = heapq.heappop(heap)
        updates += 1
        n += 1.0 / k
        if _accuracy(n, rounds_to_converge) >= 0.90:
            return t, n
        spec, rng = specs[i], rngs[i]
        dl, comp, ul = _client_round_parts(spec, rng, t, throttle_for(spec))
        heapq.heappush(heap, (t + dl + comp + ul, i))
    raise InvalidSpecError(f"no convergence within {max_rounds} rounds")


def emulate_throttle(
    specs: Sequence[SessionSpec],
    attacked_clients: set[str],
    denial_frac: float,
    sync_mode: SyncMode,
    schedule: ThrottleSchedule | None = None,
    max_rounds: int = 100_000,
) -> ThrottleReport:
    """Convergence delay and cost of denying throughput to selected clients.

    All specs must share one model profile (one FL application). The global
    accuracy follows the saturating surrogate curve; convergence is the
    first aggregation where it reaches 90%.
    """
    if not specs:
        raise InvalidSpecError("need at least one client session")
    if not (0.0 < denial_frac < 1.0):
        raise InvalidSpecError("denial_frac must be in (0, 1)")
    names = {spec.client.name for spec in specs}
    missing = attacked_clients - names
    if missing:
        raise InvalidSpecError(f"attacked clients not in session: {sorted(missing)}")
    models = {spec.model.name for spec in specs}
    if len(models) > 1:
        raise InvalidSpecError(f"specs span multiple models: {sorted(models)}")

    rounds_to_converge = specs[0].model.rounds_to_converge
    base_t, base_n = _run_session_group(
        specs, set(), 0.0, sync_mode, None, rounds_to_converge, max_rounds
    )
    att_t, att_n = _run_session_group(
        specs, attacked_clients, denial_frac, sync_mode, schedule,
        rounds_to_converge, max_rounds,
    )
    b_uncomp = float(np.mean([s.link.throughput_mbps for s in specs if s.client.name in attacked_clients])) if attacked_clients else specs[0].link.throughput_mbps
    cost = cost_of_attack(max(len(attacked_clients), 1), b_uncomp, b_uncomp * (1.0 - denial_frac))
    return ThrottleReport(
        baseline_time_s=base_t,
        attacked_time_s=att_t,
        baseline_rounds=base_n,
        attacked_rounds=att_n,
        delay_frac=(att_t - base_t) / base_t,
        cost=cost,
        n_attacked=len(attacked_clients),
        denial_frac=denial_frac,
        sync_mode=sync_mode.value,
        schedule="continuous" if schedule is None else schedule.assumed_model,
    )


# --- introspection helpers ----------------------------------------------------

def dominant_period(
    trace: ClientTrace,
    min_period_s: float,
    max_period_s: float,
    bin_s: float = 0.1,
) -> float:
    """Dominant arrival-rate period within [min, max] via the FFT peak."""
    if len(trace) < 2:
        raise InvalidSpecError("trace too short for spectral analysis")
    t0 = trace.timestamps[0]
    span = float(trace.timestamps[-1] - t0)
    n_bins = max(int(math.ceil(span / bin_s)), 2)
    idx = np.minimum(((trace.timestamps - t0) / bin_s).astype(np.int64), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins).astype(np.float64)
    counts -= counts.mean()
    power = np.abs(np.fft.rfft(counts)) ** 2
    freqs = np.fft.rfftfreq(n_bins, d=bin_s)
    mask = (freqs >= 1.0 / max_period_s) & (freqs <= 1.0 / min_period_s)
    if not mask.any():
        raise InvalidSpecError("period range outside spectral resolution")
    band = np.flatnonzero(mask)
    peak = band[int(np.argmax(power[band]))]
    return float(1.0 / freqs[peak])
