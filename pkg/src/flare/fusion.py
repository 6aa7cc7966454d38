"""End-to-end fingerprinting pipeline: per-class base forests on the two
feature views, plus a per-class fusion meta-classifier over their outputs.

Training filters inactive traces, segments and featurizes windows, fits the
base forests, and fits each fusion model on out-of-fold base predictions
(the bases never score windows they were trained on while the meta model is
being fitted, which avoids leakage).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    FilteredWindowError,
    InsufficientDataError,
    LengthMismatchError,
    UnlabeledWindowError,
)
from .features import (
    FlowFeatures,
    PacketFeatures,
    feature_matrix,
    flow_features,
    packet_features,
)
from .ingest import ClientTrace
from .labels import ArchLabel, ModelFamily, register_model_family
from .learners import (
    Dataset,
    ForestParams,
    GbtModel,
    GbtParams,
    LogisticModel,
    RandomForest,
    fit_forest,
    fit_gbt,
    fit_logreg,
)
from .learners.io import model_from_dict, model_to_dict
from .learners.model_selection import binary_f1, stratified_indices
from .segmentation import (
    TrafficWindow,
    WindowConfig,
    filter_active,
    segment,
    trace_is_active,
)

TARGET_CLASSES = (ModelFamily.CNN, ModelFamily.RNN)

PIPELINE_FORMAT = "flare-pipeline"
PIPELINE_VERSION = 1

# Desk-scale hyperparameter grids for optional tuning.
DEFAULT_FOREST_GRID = {"n_trees": [50, 100], "max_depth": [8, 12]}
DEFAULT_LOGREG_GRID = {"l2": [0.01, 0.1, 1.0]}
DEFAULT_GBT_GRID = {"learning_rate": [0.1, 0.3], "n_rounds": [50, 100]}

VERDICT_CNN = "cnn"
VERDICT_RNN = "rnn"
VERDICT_UNKNOWN = "unknown"
VERDICT_CONFLICT = "conflict"


@dataclass(frozen=True)
class MetaFeature:
    """Base-model probability pair fed to one fusion classifier."""

    p_flow: float
    p_pkt: float
    target_class: ModelFamily

    def __post_init__(self):
        for p in (self.p_flow, self.p_pkt):
            if not (0.0 <= p <= 1.0) or not np.isfinite(p):
                raise ValueError(f"probability {p} out of range")


@dataclass(frozen=True)
class PipelineConfig:
    window: WindowConfig = WindowConfig()
    fusion_kind: str = "logreg"  # "logreg" or "gbt"
    forest: ForestParams = ForestParams()
    logreg_l2: float = 0.1
    gbt: GbtParams = GbtParams()
    n_folds: int = 5
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.fusion_kind not in ("logreg", "gbt"):
            raise ValueError("fusion_kind must be 'logreg' or 'gbt'")

    def to_dict(self) -> dict:
        return {
            "window": {
                "window_s": self.window.window_s,
                "stride_s": self.window.stride_s,
                "tau_bytes": self.window.tau_bytes,
            },
            "fusion_kind": self.fusion_kind,
            "forest": dataclasses.asdict(self.forest),
            "logreg_l2": self.logreg_l2,
            "gbt": dataclasses.asdict(self.gbt),
            "n_folds": self.n_folds,
            "threshold": self.threshold,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return cls(
            window=WindowConfig(**data["window"]),
            fusion_kind=data["fusion_kind"],
            forest=ForestParams(**data["forest"]),
            logreg_l2=data["logreg_l2"],
            gbt=GbtParams(**data["gbt"]),
            n_folds=data["n_folds"],
            threshold=data["threshold"],
            seed=data["seed"],
        )


@dataclass
class WindowTable:
    """Featurized window corpus; rows sorted by (trace key, window index)."""

    window_ids: list[str]
    trace_keys: list[str]
    labels: list[ArchLabel | None]
    X_flow: np.ndarray
    X_pkt: np.ndarray
    window_cfg: WindowConfig

    @property
    def n(self) -> int:
        return len(self.window_ids)

    def subset(self, idx: np.ndarray) -> "WindowTable":
        return WindowTable(
            [self.window_ids[i] for i in idx],
            [self.trace_keys[i] for i in idx],
            [self.labels[i] for i in idx],
            self.X_flow[idx],
            self.X_pkt[idx],
            self.window_cfg,
        )

    def rows_for_traces(self, keys: set[str]) -> np.ndarray:
        return np.array(
            [i for i, k in enumerate(self.trace_keys) if k in keys], dtype=np.int64
        )


def featurize_corpus(traces: Sequence[ClientTrace], cfg: WindowConfig) -> WindowTable:
    """Activity-filter traces, segment, window-filter, and featurize both views."""
    windows: list[TrafficWindow] = []
    for trace in sorted(traces, key=lambda t: (t.client_id, t.trace_id)):
        if not trace_is_active(trace, cfg.tau_bytes):
            continue
        windows.extend(filter_active(segment(trace, cfg), cfg.tau_bytes))
    X_flow, X_pkt = feature_matrix(windows)
    return WindowTable(
        window_ids=[w.origin.window_id for w in windows],
        trace_keys=[f"{w.origin.client_id}/{w.origin.trace_id}" for w in windows],
        labels=[w.label for w in windows],
        X_flow=X_flow,
        X_pkt=X_pkt,
        window_cfg=cfg,
    )


def binarize_labels(windows: Sequence[TrafficWindow], target: ModelFamily) -> np.ndarray:
    """One-vs-rest labels: 1 iff the window's family equals the target."""
    return _binarize([w.label for w in windows], target)


def _binarize(labels: Sequence[ArchLabel | None], target: ModelFamily) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    for i, label in enumerate(labels):
        if label is None:
            raise UnlabeledWindowError(f"window {i} has no label")
        out[i] = 1 if label.family == target else 0
    return out


def build_meta_features(h_f, h_p, windows: Sequence[TrafficWindow], target: ModelFamily) -> list[MetaFeature]:
    """Per window, the pair [flow-model probability, packet-model probability]."""
    X_flow, X_pkt = feature_matrix(list(windows))
    _check_dims(h_f, X_flow.shape[1])
    _check_dims(h_p, X_pkt.shape[1])
    p_flow = np.asarray(h_f.predict_proba(X_flow), dtype=np.float64)
    p_pkt = np.asarray(h_p.predict_proba(X_pkt), dtype=np.float64)
    if p_flow.shape != (len(windows),) or p_pkt.shape != (len(windows),):
        raise DimensionMismatchError("base model output length mismatch")
    return [
        MetaFeature(float(f), float(p), target) for f, p in zip(p_flow, p_pkt)
    ]


def meta_matrix(metas: Sequence[MetaFeature]) -> np.ndarray:
    return np.array([[m.p_flow, m.p_pkt] for m in metas], dtype=np.float64)


def _check_dims(model, expected: int) -> None:
    width = getattr(model, "n_features", None)
    if width is None:
        trees = getattr(model, "trees", None)
        if trees:
            width = trees[0].n_features
    if width is not None and width != expected:
        raise DimensionMismatchError(f"model expects {width} features, got {expected}")


def fusion_loss(predictions: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clipped away from {0,1}."""
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predictions.shape != labels.shape:
        raise LengthMismatchError(
            f"{predictions.shape} predictions vs {labels.shape} labels"
        )
    p = np.clip(predictions, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


@dataclass
class FlarePipeline:
    window: WindowConfig
    fusion_kind: str
    h_f: dict[str, RandomForest]  # keyed by target-class value ("cnn"/"rnn")
    h_p: dict[str, RandomForest]
    g: dict[str, LogisticModel | GbtModel]
    threshold: float = 0.5
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for target in TARGET_CLASSES:
            for part in (self.h_f, self.h_p, self.g):
                if target.value not in part:
                    raise ValueError(f"missing model for class {target.value}")

    def to_dict(self) -> dict:
        return {
            "format": PIPELINE_FORMAT,
            "version": PIPELINE_VERSION,
            "window": {
                "window_s": self.window.window_s,
                "stride_s": self.window.stride_s,
                "tau_bytes": self.window.tau_bytes,
            },
            "fusion_kind": self.fusion_kind,
            "threshold": self.threshold,
            "h_f": {k: model_to_dict(v) for k, v in self.h_f.items()},
            "h_p": {k: model_to_dict(v) for k, v in self.h_p.items()},
            "g": {k: model_to_dict(v) for k, v in self.g.items()},
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FlarePipeline":
        if data.get("format") != PIPELINE_FORMAT:
            raise ValueError("not a flare pipeline record")
        if data.get("version") != PIPELINE_VERSION:
            raise ValueError(f"unsupported pipeline version {data.get('version')}")
        return cls(
            window=WindowConfig(**data["window"]),
            fusion_kind=data["fusion_kind"],
            threshold=data["threshold"],
            h_f={k: model_from_dict(v) for k, v in data["h_f"].items()},
            h_p={k: model_from_dict(v) for k, v in data["h_p"].items()},
            g={k: model_from_dict(v) for k, v in data["g"].items()},
            provenance=data.get("provenance", {}),
        )

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str | Path) -> "FlarePipeline":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class ClassScores:
    p_flow: float
    p_pkt: float
    p_fused: float
    positive: bool


@dataclass(frozen=True)
class WindowPrediction:
    window_id: str
    per_class: dict[str, ClassScores]
    verdict: str

    def to_record(self) -> dict:
        rec: dict = {"window_id": self.window_id, "verdict": self.verdict}
        for target, scores in self.per_class.items():
            rec[f"p_flow_{target}"] = scores.p_flow
            rec[f"p_pkt_{target}"] = scores.p_pkt
            rec[f"p_fused_{target}"] = scores.p_fused
            rec[f"positive_{target}"] = scores.positive
        return rec


def _derived_seed(seed: int, *tags: int) -> int:
    return int(np.random.SeedSequence([seed, *tags]).generate_state(1, np.uint64)[0])


def _fit_fusion_model(cfg: PipelineConfig, meta_X: np.ndarray, y: np.ndarray):
    ds = Dataset(meta_X, y, ["p_flow", "p_pkt"])
    if cfg.fusion_kind == "logreg":
        return fit_logreg(ds, l2=cfg.logreg_l2)
    return fit_gbt(ds, cfg.gbt)


def _scores(y_true: np.ndarray, y_pred: np.ndarray) -> dict:
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def train_on_table(table: WindowTable, cfg: PipelineConfig) -> tuple[FlarePipeline, dict]:
    """Fit the full pipeline from a featurized window table.

    Returns the pipeline plus a cross-validation report with out-of-fold
    precision/recall/F1 for each view and the fused out-of-fold loss.
    """
    families = {label.family for label in table.labels if label is not None}
    if len(families) < 2:
        raise InsufficientDataError("corpus", "need at least 2 families to train")

    h_f: dict[str, RandomForest] = {}
    h_p: dict[str, RandomForest] = {}
    g: dict[str, LogisticModel | GbtModel] = {}
    report: dict = {"classes": {}}

    for li, target in enumerate(TARGET_CLASSES):
        y = _binarize(table.labels, target)
        n_pos = int(y.sum())
        n_neg = int(len(y) - n_pos)
        if n_pos < cfg.n_folds or n_neg < cfg.n_folds:
            raise InsufficientDataError(
                target.value,
                f"{n_pos} positive / {n_neg} negative windows, need >= {cfg.n_folds} each",
            )

        folds = stratified_indices(
            y, cfg.n_folds, np.random.default_rng(_derived_seed(cfg.seed, li, 99))
        )
        all_idx = np.arange(len(y))
        oof_flow = np.empty(len(y))
        oof_pkt = np.empty(len(y))
        for fi, fold in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, fold)
            flow_model = fit_forest(
                Dataset(table.X_flow[train_idx], y[train_idx]),
                dataclasses.replace(cfg.forest, seed=_derived_seed(cfg.seed, li, 0, fi)),
            )
            pkt_model = fit_forest(
                Dataset(table.X_pkt[train_idx], y[train_idx]),
                dataclasses.replace(cfg.forest, seed=_derived_seed(cfg.seed, li, 1, fi)),
            )
            oof_flow[fold] = flow_model.predict_proba(table.X_flow[fold])
            oof_pkt[fold] = pkt_model.predict_proba(table.X_pkt[fold])

        h_f[target.value] = fit_forest(
            Dataset(table.X_flow, y, FlowFeatures.column_names()),
            dataclasses.replace(cfg.forest, seed=_derived_seed(cfg.seed, li, 0, cfg.n_folds)),
        )
        h_p[target.value] = fit_forest(
            Dataset(table.X_pkt, y, PacketFeatures.column_names()),
            dataclasses.replace(cfg.forest, seed=_derived_seed(cfg.seed, li, 1, cfg.n_folds)),
        )

        meta_X = np.column_stack([oof_flow, oof_pkt])
        g[target.value] = _fit_fusion_model(cfg, meta_X, y)

        # Fused out-of-fold scores: refit the meta model per fold on the
        # out-of-fold base predictions of the remaining folds.
        fused_oof = np.empty(len(y))
        for fold in folds:
            train_idx = np.setdiff1d(all_idx, fold)
            g_fold = _fit_fusion_model(cfg, meta_X[train_idx], y[train_idx])
            fused_oof[fold] = g_fold.predict_proba(meta_X[fold])

        thr = cfg.threshold
        report["classes"][target.value] = {
            "n_pos": n_pos,
            "n_neg": n_neg,
            "flow": _scores(y, (oof_flow >= thr).astype(np.int64)),
            "packet": _scores(y, (oof_pkt >= thr).astype(np.int64)),
            "fusion": _scores(y, (fused_oof >= thr).astype(np.int64)),
            "fusion_oof_bce": fusion_loss(fused_oof, y),
        }

    pipeline = FlarePipeline(
        window=table.window_cfg,
        fusion_kind=cfg.fusion_kind,
        h_f=h_f,
        h_p=h_p,
        g=g,
        threshold=cfg.threshold,
        provenance={"config": cfg.to_dict(), "n_windows": table.n},
    )
    return pipeline, report


def train_flare(
    corpus: Sequence[ClientTrace], cfg: PipelineConfig
) -> tuple[FlarePipeline, dict]:
    """Filter, segment, featurize a trace corpus, then train the pipeline."""
    table = featurize_corpus(corpus, cfg.window)
    return train_on_table(table, cfg)


def tune_config(table: WindowTable, cfg: PipelineConfig) -> PipelineConfig:
    """Grid-search the forest and fusion hyperparameters on the table.

    Forest candidates are scored by mean cross-validated F1 over all four
    base tasks (two target classes x two views); the fusion grid is scored
    on out-of-fold meta features from the chosen forest. Ties keep the
    earliest grid entry.
    """
    from .learners.model_selection import expand_grid, grid_search

    forest_grid = expand_grid(DEFAULT_FOREST_GRID)
    task_scores = np.zeros(len(forest_grid))
    tasks = []
    for li, target in enumerate(TARGET_CLASSES):
        y = _binarize(table.labels, target)
        tasks.append((li, 0, Dataset(table.X_flow, y), target))
        tasks.append((li, 1, Dataset(table.X_pkt, y), target))
    for li, vi, ds, _ in tasks:
        def fit(train_ds, **params):
            return fit_forest(
                train_ds,
                dataclasses.replace(
                    cfg.forest, seed=_derived_seed(cfg.seed, 900, li, vi), **params
                ),
            )
        result = grid_search(ds, fit, forest_grid, k=cfg.n_folds, seed=_derived_seed(cfg.seed, 901, li, vi))
        task_scores += [row["mean_f1"] for row in result.table]
    forest = dataclasses.replace(cfg.forest, **forest_grid[int(np.argmax(task_scores))])
    tuned = dataclasses.replace(cfg, forest=forest)

    # Fusion grid on out-of-fold meta features from the tuned forest.
    if cfg.fusion_kind == "logreg":
        fusion_grid = expand_grid(DEFAULT_LOGREG_GRID)
    else:
        fusion_grid = expand_grid(DEFAULT_GBT_GRID)
    fusion_scores = np.zeros(len(fusion_grid))
    for li, target in enumerate(TARGET_CLASSES):
        y = _binarize(table.labels, target)
        folds = stratified_indices(
            y, cfg.n_folds, np.random.default_rng(_derived_seed(cfg.seed, 902, li))
        )
        all_idx = np.arange(len(y))
        meta = np.empty((len(y), 2))
        for fi, fold in enumerate(folds):
            train_idx = np.setdiff1d(all_idx, fold)
            for vi, X in enumerate((table.X_flow, table.X_pkt)):
                model = fit_forest(
                    Dataset(X[train_idx], y[train_idx]),
                    dataclasses.replace(forest, seed=_derived_seed(cfg.seed, 903, li, vi, fi)),
                )
                meta[fold, vi] = model.predict_proba(X[fold])
        meta_ds = Dataset(meta, y, ["p_flow", "p_pkt"])
        if cfg.fusion_kind == "logreg":
            def fit_meta(train_ds, **params):
                return fit_logreg(train_ds, **params)
        else:
            def fit_meta(train_ds, **params):
                return fit_gbt(train_ds, dataclasses.replace(cfg.gbt, **params))
        result = grid_search(
            meta_ds, fit_meta, fusion_grid, k=cfg.n_folds, seed=_derived_seed(cfg.seed, 904, li)
        )
        fusion_scores += [row["mean_f1"] for row in result.table]
    best_fusion = fusion_grid[int(np.argmax(fusion_scores))]
    if cfg.fusion_kind == "logreg":
        return dataclasses.replace(tuned, logreg_l2=best_fusion["l2"])
    return dataclasses.replace(tuned, gbt=dataclasses.replace(cfg.gbt, **best_fusion))


def _predict_rows(
    pipeline: FlarePipeline, X_flow: np.ndarray, X_pkt: np.ndarray
) -> dict[str, dict[str, np.ndarray]]:
    out: dict[str, dict[str, np.ndarray]] = {}
    for target in TARGET_CLASSES:
        key = target.value
        p_flow = pipeline.h_f[key].predict_proba(X_flow)
        p_pkt = pipeline.h_p[key].predict_proba(X_pkt)
        fused = pipeline.g[key].predict_proba(np.column_stack([p_flow, p_pkt]))
        out[key] = {"flow": p_flow, "packet": p_pkt, "fusion": fused}
    return out


def _verdict(positives: dict[str, bool]) -> str:
    cnn = positives[ModelFamily.CNN.value]
    rnn = positives[ModelFamily.RNN.value]
    if cnn and rnn:
        return VERDICT_CONFLICT
    if cnn:
        return VERDICT_CNN
    if rnn:
        return VERDICT_RNN
    return VERDICT_UNKNOWN


def predict(pipeline: FlarePipeline, window: TrafficWindow) -> WindowPrediction:
    """Score one window: per-class probabilities, decisions, and a verdict."""
    if window.max_size <= pipeline.window.tau_bytes:
        raise FilteredWindowError(
            f"window {window.origin.window_id} has no packet above "
            f"{pipeline.window.tau_bytes} bytes"
        )
    xf = flow_features(window).as_vector().reshape(1, -1)
    xp = packet_features(window).as_vector().reshape(1, -1)
    rows = _predict_rows(pipeline, xf, xp)
    per_class: dict[str, ClassScores] = {}
    positives: dict[str, bool] = {}
    for key, probs in rows.items():
        fused = float(probs["fusion"][0])
        positive = fused >= pipeline.threshold
        per_class[key] = ClassScores(
            p_flow=float(probs["flow"][0]),
            p_pkt=float(probs["packet"][0]),
            p_fused=fused,
            positive=positive,
        )
        positives[key] = positive
    return WindowPrediction(
        window_id=window.origin.window_id,
        per_class=per_class,
        verdict=_verdict(positives),
    )


def predict_trace(pipeline: FlarePipeline, trace: ClientTrace) -> list[WindowPrediction]:
    """Segment a trace with the pipeline's window config and score each
    surviving window; raises FilteredWindow when none survives the filter."""
    windows = filter_active(segment(trace, pipeline.window), pipeline.window.tau_bytes)
    if not windows:
        raise FilteredWindowError(
            f"trace {trace.trace_id}: no window passes the activity filter"
        )
    return [predict(pipeline, w) for w in windows]
