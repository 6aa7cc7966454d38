"""Evaluation harnesses and separability analytics.

Closed- and open-world evaluations retrain the pipeline per run on a
trace-level stratified split and report precision/recall/F1 for each target
class and view (flow-only, packet-only, fusion). Two dispersion figures are
emitted side by side: a bootstrap std over test samples within each run,
and a confidence interval across runs from the tabulated two-sided 95%
Student t (df = runs - 1; 2.776 for the five-run protocol).
"""

from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BinMismatchError,
    LengthMismatchError,
    SingleClassError,
    UnknownModelNameError,
    WrongRunCountError,
)
from .fusion import (
    TARGET_CLASSES,
    FlarePipeline,
    PipelineConfig,
    WindowTable,
    _binarize,
    _predict_rows,
    featurize_corpus,
    train_on_table,
)
from .ingest import ClientTrace
from .labels import ModelFamily
from .segmentation import WindowConfig

T_TABLE_95 = {
    1: 12.706, 2: 4.303, 3: 3.182, 4: 2.776, 5: 2.571, 6: 2.447, 7: 2.365,
    8: 2.306, 9: 2.262, 10: 2.228, 11: 2.201, 12: 2.179, 13: 2.160,
    14: 2.145, 15: 2.131, 16: 2.120, 17: 2.110, 18: 2.101, 19: 2.093,
    20: 2.086, 21: 2.080, 22: 2.074, 23: 2.069, 24: 2.064, 25: 2.060,
    26: 2.056, 27: 2.052, 28: 2.048, 29: 2.045, 30: 2.042,
}

PAPER_RUN_COUNT = 5
BOOTSTRAP_GROUPS = 50

VIEWS = ("flow", "packet", "fusion")
METRICS = ("precision", "recall", "f1")


@dataclass(frozen=True)
class PrecisionRecallF1:
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # a zero denominator was coerced to 0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.precision, self.recall, self.f1)


def precision_recall_f1(y_true: np.ndarray, y_pred: np.ndarray) -> PrecisionRecallF1:
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape:
        raise LengthMismatchError(f"{y_true.shape} vs {y_pred.shape}")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    degenerate = False
    if tp + fp == 0:
        precision, degenerate = 0.0, True
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        recall, degenerate = 0.0, True
    else:
        recall = tp / (tp + fn)
    if precision + recall == 0.0:
        return PrecisionRecallF1(precision, recall, 0.0, True)
    f1 = 2 * precision * recall / (precision + recall)
    return PrecisionRecallF1(precision, recall, f1, degenerate)


def ci95(run_scores: Sequence[float], strict: bool = True) -> tuple[float, float]:
    """Mean and t-based half-width over independent runs.

    Strict mode enforces the five-run protocol (t = 2.776 exactly).
    """
    scores = np.asarray(run_scores, dtype=np.float64)
    if strict and len(scores) != PAPER_RUN_COUNT:
        raise WrongRunCountError(f"expected {PAPER_RUN_COUNT} runs, got {len(scores)}")
    if len(scores) < 2:
        raise WrongRunCountError("need at least 2 runs for an interval")
    df = len(scores) - 1
    t = T_TABLE_95.get(df, 1.96)
    s = float(np.std(scores, ddof=1))
    return float(np.mean(scores)), t * s / np.sqrt(len(scores))


@dataclass
class MetricAggregate:
    run_scores: list[float]
    mean: float
    std: float | None = None            # across runs
    ci95_low: float | None = None
    ci95_high: float | None = None
    bootstrap_std: float | None = None  # mean of within-run sample bootstrap stds


@dataclass
class MetricsReport:
    scenario: str
    n_runs: int
    seeds: list[int]
    # classes[target][view][metric] -> MetricAggregate
    classes: dict[str, dict[str, dict[str, MetricAggregate]]]
    config: dict = field(default_factory=dict)

    def get(self, target: str, view: str, metric: str) -> MetricAggregate:
        return self.classes[target][view][metric]

    def to_rows(self) -> list[dict]:
        rows = []
        for target, views in self.classes.items():
            for view, metrics in views.items():
                for metric, agg in metrics.items():
                    rows.append(
                        {
                            "scenario": self.scenario,
                            "class": target,
                            "view": view,
                            "metric": metric,
                            "mean": agg.mean,
                            "std_runs": agg.std,
                            "bootstrap_std": agg.bootstrap_std,
                            "ci95_low": agg.ci95_low,
                            "ci95_high": agg.ci95_high,
                            "run_scores": ";".join(f"{s:.6f}" for s in agg.run_scores),
                        }
                    )
        return rows


def _trace_family_map(table: WindowTable) -> dict[str, tuple[str, str]]:
    """trace key -> (family value, model name)."""
    out: dict[str, tuple[str, str]] = {}
    for key, label in zip(table.trace_keys, table.labels):
        if label is not None and key not in out:
            out[key] = (label.family.value, label.model_name)
    return out


def _split_trace_keys(
    trace_info: dict[str, tuple[str, str]],
    rng: np.random.Generator,
    test_frac: float,
    always_test: set[str] = frozenset(),
) -> tuple[set[str], set[str]]:
    by_family: dict[str, list[str]] = defaultdict(list)
    for key in sorted(trace_info):
        if key in always_test:
            continue
        by_family[trace_info[key][0]].append(key)
    train: set[str] = set()
    test: set[str] = set(always_test)
    for family in sorted(by_family):
        keys = by_family[family]
        perm = rng.permutation(len(keys))
        n_test = max(1, int(round(test_frac * len(keys))))
        if n_test >= len(keys):
            n_test = len(keys) - 1
        for pos, i in enumerate(perm):
            (test if pos < n_test else train).add(keys[i])
    return train, test


def _run_metrics(
    pipeline: FlarePipeline,
    test_table: WindowTable,
    rng: np.random.Generator,
    bootstrap: bool,
) -> dict[str, dict[str, dict[str, float | tuple[float, float]]]]:
    probs = _predict_rows(pipeline, test_table.X_flow, test_table.X_pkt)
    out: dict = {}
    for target in TARGET_CLASSES:
        y_true = _binarize(test_table.labels, target)
        out[target.value] = {}
        for view in VIEWS:
            y_pred = (probs[target.value][view] >= pipeline.threshold).astype(np.int64)
            prf = precision_recall_f1(y_true, y_pred)
            entry: dict[str, float | tuple[float, float]] = {
                "precision": prf.precision,
                "recall": prf.recall,
                "f1": prf.f1,
            }
            if bootstrap:
                boots = {m: [] for m in METRICS}
                n = len(y_true)
                for _ in range(BOOTSTRAP_GROUPS):
                    pick = rng.integers(0, n, size=n)
                    b = precision_recall_f1(y_true[pick], y_pred[pick])
                    boots["precision"].append(b.precision)
                    boots["recall"].append(b.recall)
                    boots["f1"].append(b.f1)
                for m in METRICS:
                    entry[m] = (entry[m], float(np.std(boots[m], ddof=1)))
            out[target.value][view] = entry
    return out


def _aggregate_runs(
    scenario: str,
    per_run: list[dict],
    seeds: list[int],
    config: dict,
) -> MetricsReport:
    n_runs = len(per_run)
    classes: dict = {}
    for target in TARGET_CLASSES:
        classes[target.value] = {}
        for view in VIEWS:
            classes[target.value][view] = {}
            for metric in METRICS:
                values = []
                boot_stds = []
                for run in per_run:
                    entry = run[target.value][view][metric]
                    if isinstance(entry, tuple):
                        values.append(entry[0])
                        boot_stds.append(entry[1])
                    else:
                        values.append(entry)
                agg = MetricAggregate(run_scores=values, mean=float(np.mean(values)))
                if n_runs > 1:
                    agg.std = float(np.std(values, ddof=1))
                    mean, half = ci95(values, strict=(n_runs == PAPER_RUN_COUNT))
                    agg.ci95_low = mean - half
                    agg.ci95_high = mean + half
                if boot_stds:
                    agg.bootstrap_std = float(np.mean(boot_stds))
                classes[target.value][view][metric] = agg
    return MetricsReport(
        scenario=scenario, n_runs=n_runs, seeds=list(seeds), classes=classes, config=config
    )


def _check_runs(n_runs: int, seeds: Sequence[int]) -> list[int]:
    seeds = list(seeds)
    if len(seeds) != n_runs:
        raise WrongRunCountError(f"{n_runs} runs requested but {len(seeds)} seeds given")
    return seeds


def evaluate_closed_world(
    pipeline_cfg: PipelineConfig,
    corpus: Sequence[ClientTrace],
    n_runs: int,
    seeds: Sequence[int],
    test_frac: float = 0.3,
    bootstrap: bool = True,
) -> MetricsReport:
    """All families appear in training and testing; one retrain per run."""
    seeds = _check_runs(n_runs, seeds)
    table = featurize_corpus(corpus, pipeline_cfg.window)
    trace_info = _trace_family_map(table)
    per_run = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        train_keys, test_keys = _split_trace_keys(trace_info, rng, test_frac)
        train_table = table.subset(table.rows_for_traces(train_keys))
        test_table = table.subset(table.rows_for_traces(test_keys))
        pipeline, _ = train_on_table(
            train_table, dataclasses.replace(pipeline_cfg, seed=seed)
        )
        per_run.append(_run_metrics(pipeline, test_table, rng, bootstrap))
    return _aggregate_runs(
        "closed_world", per_run, seeds, {"pipeline": pipeline_cfg.to_dict(), "test_frac": test_frac}
    )


def evaluate_open_world(
    pipeline_cfg: PipelineConfig,
    corpus: Sequence[ClientTrace],
    holdout_models: Sequence[str],
    n_runs: int,
    seeds: Sequence[int],
    test_frac: float = 0.3,
    bootstrap: bool = True,
) -> MetricsReport:
    """Hold named model generators out of training; they only appear in test.

    Held-out windows keep their true family, so they count against the
    target class only when that family matches.
    """
    if not holdout_models:
        raise UnknownModelNameError("<empty holdout list>")
    seeds = _check_runs(n_runs, seeds)
    table = featurize_corpus(corpus, pipeline_cfg.window)
    trace_info = _trace_family_map(table)
    known_models = {model for _, model in trace_info.values()}
    for name in holdout_models:
        if name not in known_models:
            raise UnknownModelNameError(name)
    holdout_keys = {
        key for key, (_, model) in trace_info.items() if model in set(holdout_models)
    }
    per_run = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        train_keys, test_keys = _split_trace_keys(
            trace_info, rng, test_frac, always_test=holdout_keys
        )
        train_table = table.subset(table.rows_for_traces(train_keys))
        test_table = table.subset(table.rows_for_traces(test_keys))
        pipeline, _ = train_on_table(
            train_table, dataclasses.replace(pipeline_cfg, seed=seed)
        )
        per_run.append(_run_metrics(pipeline, test_table, rng, bootstrap))
    return _aggregate_runs(
        "open_world",
        per_run,
        seeds,
        {
            "pipeline": pipeline_cfg.to_dict(),
            "test_frac": test_frac,
            "holdout_models": list(holdout_models),
        },
    )


@dataclass
class SweepRow:
    window_s: float
    target: str
    flow_f1: float
    packet_f1: float
    fusion_f1: float


def window_sweep(
    pipeline_cfg: PipelineConfig,
    corpus: Sequence[ClientTrace],
    window_lengths: Sequence[float],
    n_runs: int,
    seeds: Sequence[int],
) -> list[SweepRow]:
    """Re-segment, retrain, and score at each observation-window length."""
    for length in window_lengths:
        if not (60.0 <= length <= 900.0):
            raise ValueError(f"window length {length} outside [60, 900] seconds")
    rows: list[SweepRow] = []
    for length in window_lengths:
        cfg = dataclasses.replace(
            pipeline_cfg,
            window=WindowConfig(window_s=float(length), tau_bytes=pipeline_cfg.window.tau_bytes),
        )
        report = evaluate_closed_world(cfg, corpus, n_runs, seeds, bootstrap=False)
        for target in TARGET_CLASSES:
            rows.append(
                SweepRow(
                    window_s=float(length),
                    target=target.value,
                    flow_f1=report.get(target.value, "flow", "f1").mean,
                    packet_f1=report.get(target.value, "packet", "f1").mean,
                    fusion_f1=report.get(target.value, "fusion", "f1").mean,
                )
            )
    return rows


# --- separability ------------------------------------------------------------

def fisher_score(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Between-class over within-class variance ratio per feature.

    Features with zero within-class variance but distinct class means score
    +inf ("perfectly separating"); identical features score 0.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = np.unique(y)
    if len(classes) < 2:
        raise SingleClassError("need both classes for a Fisher score")
    mu = X.mean(axis=0)
    between = np.zeros(X.shape[1])
    within = np.zeros(X.shape[1])
    for cls in classes:
        Xc = X[y == cls]
        n_c = len(Xc)
        mu_c = Xc.mean(axis=0)
        between += n_c * (mu_c - mu) ** 2
        within += n_c * Xc.var(axis=0)
    scores = np.empty(X.shape[1])
    zero_within = within == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = between / within
    scores[zero_within & (between > 0.0)] = np.inf
    scores[zero_within & (between == 0.0)] = 0.0
    return scores


def kl_divergence(p: np.ndarray, q: np.ndarray, eps: float = 1e-10) -> float:
    """Relative entropy sum(p * ln(p/q)) after additive smoothing by eps and
    renormalization; natural log."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise BinMismatchError(f"{p.shape} vs {q.shape}")
    ps = (p + eps) / (p + eps).sum()
    qs = (q + eps) / (q + eps).sum()
    return float(np.sum(ps * np.log(ps / qs)))


KL_FEATURE_KINDS = ("mean_frame", "mean_iat", "std_iat")


def _chunk_feature_values(
    trace: ClientTrace, feature_kind: str, sub_window_s: float
) -> np.ndarray:
    """Per-chunk scalar feature over fixed sub-windows of one trace."""
    if feature_kind not in KL_FEATURE_KINDS:
        raise ValueError(f"feature_kind must be one of {KL_FEATURE_KINDS}")
    if len(trace) == 0:
        return np.empty(0)
    t0 = trace.timestamps[0]
    idx = ((trace.timestamps - t0) / sub_window_s).astype(np.int64)
    n_chunks = int(idx[-1]) + 1
    if feature_kind == "mean_frame":
        counts = np.bincount(idx, minlength=n_chunks)
        sums = np.bincount(idx, weights=trace.sizes.astype(np.float64), minlength=n_chunks)
        ok = counts >= 1
        return sums[ok] / counts[ok]
    iats = np.diff(trace.timestamps)
    owner = idx[1:]  # gap observed at the later packet's arrival
    counts = np.bincount(owner, minlength=n_chunks)
    sums = np.bincount(owner, weights=iats, minlength=n_chunks)
    if feature_kind == "mean_iat":
        ok = counts >= 1
        return sums[ok] / counts[ok]
    sq = np.bincount(owner, weights=iats * iats, minlength=n_chunks)
    ok = counts >= 2
    mean = sums[ok] / counts[ok]
    var = np.maximum(sq[ok] / counts[ok] - mean**2, 0.0)
    return np.sqrt(var)


@dataclass
class KlResult:
    feature_kind: str
    mean: float
    std: float
    per_trace: list[float]
    n_bins: int
    sub_window_s: float
    eps: float


def per_trace_kl(
    traces_p: Sequence[ClientTrace],
    traces_q: Sequence[ClientTrace],
    feature_kind: str,
    sub_window_s: float = 10.0,
    n_bins: int = 30,
    eps: float = 1e-10,
) -> KlResult:
    """KL of each reference-class trace against the pooled opposing class.

    Each trace contributes a histogram of per-sub-window feature values over
    bins spanning the pooled min-max range of both classes.
    """
    if not traces_p or not traces_q:
        raise ValueError("need at least one trace per side")
    p_values = [_chunk_feature_values(t, feature_kind, sub_window_s) for t in traces_p]
    q_values = [_chunk_feature_values(t, feature_kind, sub_window_s) for t in traces_q]
    pooled = np.concatenate(p_values + q_values)
    if pooled.size == 0:
        raise ValueError("no feature samples in any trace")
    lo, hi = float(pooled.min()), float(pooled.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)

    q_pool = np.concatenate(q_values)
    q_hist, _ = np.histogram(q_pool, bins=edges)
    q_hist = q_hist / max(q_hist.sum(), 1)

    scores = []
    for values in p_values:
        hist, _ = np.histogram(values, bins=edges)
        total = hist.sum()
        if total == 0:
            continue
        scores.append(kl_divergence(hist / total, q_hist, eps))
    if not scores:
        raise ValueError("no reference trace produced feature samples")
    return KlResult(
        feature_kind=feature_kind,
        mean=float(np.mean(scores)),
        std=float(np.std(scores)),
        per_trace=scores,
        n_bins=n_bins,
        sub_window_s=sub_window_s,
        eps=eps,
    )


def kl_table(
    traces: Sequence[ClientTrace],
    sub_window_s: float = 10.0,
    n_bins: int = 30,
    eps: float = 1e-10,
) -> list[dict]:
    """Per client profile and reference family, KL against the opposite
    family for every feature kind (the two-way comparison table)."""
    by_client: dict[str, dict[str, list[ClientTrace]]] = defaultdict(
        lambda: {"cnn": [], "rnn": []}
    )
    for trace in traces:
        if trace.label is None:
            continue
        if trace.label.family not in (ModelFamily.CNN, ModelFamily.RNN):
            continue
        client = trace.meta.get("client_profile", trace.client_id)
        by_client[client][trace.label.family.value].append(trace)

    rows: list[dict] = []
    for client in sorted(by_client):
        groups = by_client[client]
        if not groups["cnn"] or not groups["rnn"]:
            continue
        for reference, opposite in (("cnn", "rnn"), ("rnn", "cnn")):
            row: dict = {"client": client, "reference": reference}
            for kind in KL_FEATURE_KINDS:
                result = per_trace_kl(
                    groups[reference], groups[opposite], kind,
                    sub_window_s=sub_window_s, n_bins=n_bins, eps=eps,
                )
                row[f"{kind}_mean"] = result.mean
                row[f"{kind}_std"] = result.std
            rows.append(row)
    return rows
