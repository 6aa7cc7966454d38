"""Command-line entry point wiring the modules into reproducible experiments.

Every command takes explicit seeds, reads an optional JSON config file
(flat keys matching the flag names; explicit flags win), and writes
deterministic report files: rerunning with the same config produces
byte-identical output. Each report gets a sibling ``<name>.meta.json``
embedding the fully resolved configuration.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, flsim, fusion
from .errors import FlareError
from .features import FlowFeatures, PacketFeatures, feature_matrix
from .ingest import (
    ClientTrace,
    extract_client_trace,
    parse_capture_csv,
    read_trace,
    write_trace,
)
from .labels import ArchLabel, ModelFamily, register_model_family
from .learners import ForestParams, GbtParams
from .segmentation import WindowConfig, filter_active, segment
from .fusion import FlarePipeline, PipelineConfig

DEFAULT_EVAL_SEEDS = "11,22,33,44,55"
DEFAULT_SWEEP_LENGTHS = "60,120,300,600,900"


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


class _Resolver:
    """flag value > config value > builtin default; records the result."""

    def __init__(self, args: argparse.Namespace, config: dict):
        self.args = args
        self.config = config
        self.resolved: dict = {}

    def get(self, key: str, default):
        value = getattr(self.args, key.replace("-", "_"), None)
        if value is None:
            value = self.config.get(key, default)
        self.resolved[key] = value
        return value


def _parse_seeds(raw) -> list[int]:
    if isinstance(raw, list):
        return [int(s) for s in raw]
    return [int(s) for s in str(raw).split(",") if s.strip()]


def _parse_floats(raw) -> list[float]:
    if isinstance(raw, list):
        return [float(s) for s in raw]
    return [float(s) for s in str(raw).split(",") if s.strip()]


def _write_csv(path: Path, rows: list[dict], fieldnames: list[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _write_meta(report_path: Path, resolved: dict) -> None:
    meta = {
        "report": report_path.name,
        "config": resolved,
        "config_hash": hashlib.sha256(
            json.dumps(resolved, sort_keys=True).encode("utf-8")
        ).hexdigest(),
    }
    meta_path = report_path.with_suffix(report_path.suffix + ".meta.json")
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_corpus(corpus_dir: str | Path) -> list[ClientTrace]:
    """Load a trace corpus: manifest-listed files, else every *.csv."""
    root = Path(corpus_dir)
    manifest = root / "manifest.json"
    if manifest.exists():
        with open(manifest, "r", encoding="utf-8") as fh:
            entries = json.load(fh)["traces"]
        return [read_trace(root / e["file"]) for e in entries]
    files = sorted(root.glob("*.csv"))
    if not files:
        raise FlareError(f"no traces found under {root}")
    return [read_trace(f) for f in files]


def _window_config(r: _Resolver) -> WindowConfig:
    stride = r.get("stride-s", None)
    return WindowConfig(
        window_s=float(r.get("window-s", 300.0)),
        stride_s=None if stride is None else float(stride),
        tau_bytes=int(r.get("tau-bytes", 66)),
    )


def _pipeline_config(r: _Resolver) -> PipelineConfig:
    window = _window_config(r)
    return PipelineConfig(
        window=window,
        fusion_kind=r.get("fusion-kind", "logreg"),
        forest=ForestParams(
            n_trees=int(r.get("n-trees", 100)),
            max_depth=int(r.get("max-depth", 12)),
        ),
        logreg_l2=float(r.get("logreg-l2", 0.1)),
        gbt=GbtParams(
            learning_rate=float(r.get("gbt-learning-rate", 0.1)),
            n_rounds=int(r.get("gbt-rounds", 100)),
        ),
        n_folds=int(r.get("folds", 5)),
        threshold=float(r.get("threshold", 0.5)),
        seed=int(r.get("seed", 0)),
    )


# --- commands -----------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    out_dir = Path(r.get("out", "corpus"))
    seed = int(r.get("seed", 1234))
    n_per_spec = int(r.get("n-per-spec", 3))
    duration_s = float(r.get("duration-s", 900.0))
    scenario = r.get("scenario", None)
    if scenario:
        with open(scenario, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        specs = [flsim.session_spec_from_dict(d) for d in payload["specs"]]
        n_per_spec = int(payload.get("n_per_spec", n_per_spec))
    else:
        specs = flsim.default_corpus_specs(duration_s=duration_s)
    corpus = flsim.make_corpus(specs, n_per_spec, seed, out_dir=out_dir)
    _write_meta(out_dir / "manifest.json", r.resolved)
    print(
        f"wrote {len(corpus.traces)} traces to {out_dir} "
        f"(corpus hash {corpus.manifest_hash[:12]})",
        file=sys.stderr,
    )
    return 0


def cmd_ingest(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    capture = r.get("capture", None)
    ap = r.get("ap", None)
    client = r.get("client", None)
    out = Path(r.get("out", "trace.csv"))
    if not capture or not ap or not client:
        raise FlareError("ingest requires --capture, --ap, and --client")
    with open(capture, "rb") as fh:
        raw = parse_capture_csv(fh)
    trace = extract_client_trace(raw, ap, client)
    family = r.get("family", None)
    if family:
        model = r.get("model", "")
        if model:
            register_model_family(model, ModelFamily(family))
        trace.label = ArchLabel(ModelFamily(family), model, r.get("dataset", ""))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace(trace, out)
    print(f"wrote {len(trace)}-packet trace to {out}", file=sys.stderr)
    return 0


def cmd_segment(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    trace = read_trace(r.get("trace", "trace.csv"))
    cfg = _window_config(r)
    out = Path(r.get("out", "windows.csv"))
    windows = segment(trace, cfg)
    active = {w.origin.window_id for w in filter_active(windows, cfg.tau_bytes)}
    rows = [
        {
            "window_id": w.origin.window_id,
            "start_s": w.start_s,
            "duration_s": w.duration_s,
            "n_packets": len(w),
            "max_size": w.max_size,
            "active": w.origin.window_id in active,
        }
        for w in windows
    ]
    _write_csv(out, rows, ["window_id", "start_s", "duration_s", "n_packets", "max_size", "active"])
    _write_meta(out, r.resolved)
    return 0


def cmd_featurize(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    corpus = load_corpus(r.get("corpus", "corpus"))
    cfg = _window_config(r)
    out = Path(r.get("out", "features.csv"))

    id_cols = ["window_id", "trace_id", "client_id", "family", "model", "dataset"]
    flow_cols = FlowFeatures.column_names()
    pkt_cols = PacketFeatures.column_names()
    rows = []
    for trace in sorted(corpus, key=lambda t: (t.client_id, t.trace_id)):
        windows = filter_active(segment(trace, cfg), cfg.tau_bytes)
        if not windows:
            continue
        X_flow, X_pkt = feature_matrix(windows)
        for i, w in enumerate(windows):
            row = {
                "window_id": w.origin.window_id,
                "trace_id": w.origin.trace_id,
                "client_id": w.origin.client_id,
                "family": w.label.family.value if w.label else "",
                "model": w.label.model_name if w.label else "",
                "dataset": w.label.dataset_name if w.label else "",
            }
            row.update(zip(flow_cols, X_flow[i]))
            row.update(zip(pkt_cols, X_pkt[i]))
            rows.append(row)
    _write_csv(out, rows, id_cols + flow_cols + pkt_cols)
    _write_meta(out, r.resolved)
    print(f"wrote {len(rows)} feature rows to {out}", file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    corpus = load_corpus(r.get("corpus", "corpus"))
    cfg = _pipeline_config(r)
    out = Path(r.get("out", "pipeline.json"))
    table = fusion.featurize_corpus(corpus, cfg.window)
    if bool(r.get("grid-search", False)):
        cfg = fusion.tune_config(table, cfg)
    pipeline, report = fusion.train_on_table(table, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    pipeline.save(out)
    report_path = Path(r.get("report", str(out) + ".report.json"))
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    _write_meta(out, r.resolved)
    for target, cls in report["classes"].items():
        print(
            f"{target}: oof fusion f1={cls['fusion']['f1']:.3f} "
            f"(flow {cls['flow']['f1']:.3f}, packet {cls['packet']['f1']:.3f})",
            file=sys.stderr,
        )
    return 0


def cmd_predict(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    pipeline = FlarePipeline.load(r.get("pipeline", "pipeline.json"))
    trace = read_trace(r.get("trace", "trace.csv"))
    out = Path(r.get("out", "predictions.jsonl"))
    predictions = fusion.predict_trace(pipeline, trace)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for pred in predictions:
            fh.write(json.dumps(pred.to_record(), sort_keys=True) + "\n")
    _write_meta(out, r.resolved)
    verdicts = [p.verdict for p in predictions]
    print(
        f"{len(predictions)} windows: "
        + ", ".join(f"{v}={verdicts.count(v)}" for v in sorted(set(verdicts))),
        file=sys.stderr,
    )
    return 0


def _eval_common(r: _Resolver, scenario: str) -> tuple[PipelineConfig, list[ClientTrace], int, list[int], float]:
    corpus = load_corpus(r.get("corpus", "corpus"))
    cfg = _pipeline_config(r)
    seeds = _parse_seeds(r.get("seeds", DEFAULT_EVAL_SEEDS))
    n_runs = int(r.get("runs", len(seeds)))
    test_frac = float(r.get("test-frac", 0.3))
    return cfg, corpus, n_runs, seeds, test_frac


_EVAL_FIELDS = [
    "scenario", "class", "view", "metric", "mean", "std_runs",
    "bootstrap_std", "ci95_low", "ci95_high", "run_scores",
]


def cmd_eval_closed(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    cfg, corpus, n_runs, seeds, test_frac = _eval_common(r, "closed")
    out = Path(r.get("out", "eval_closed.csv"))
    report = analysis.evaluate_closed_world(cfg, corpus, n_runs, seeds, test_frac)
    _write_csv(out, report.to_rows(), _EVAL_FIELDS)
    _write_meta(out, r.resolved)
    for target in ("cnn", "rnn"):
        agg = report.get(target, "fusion", "f1")
        print(f"{target} fusion f1 = {agg.mean:.3f}", file=sys.stderr)
    return 0


def cmd_eval_open(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    cfg, corpus, n_runs, seeds, test_frac = _eval_common(r, "open")
    holdout_raw = r.get("holdout", "")
    holdout = [h.strip() for h in str(holdout_raw).split(",") if h.strip()]
    out = Path(r.get("out", "eval_open.csv"))
    report = analysis.evaluate_open_world(cfg, corpus, holdout, n_runs, seeds, test_frac)
    _write_csv(out, report.to_rows(), _EVAL_FIELDS)
    _write_meta(out, r.resolved)
    for target in ("cnn", "rnn"):
        agg = report.get(target, "fusion", "f1")
        print(f"{target} fusion f1 = {agg.mean:.3f}", file=sys.stderr)
    return 0


def cmd_sweep(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    corpus = load_corpus(r.get("corpus", "corpus"))
    cfg = _pipeline_config(r)
    lengths = _parse_floats(r.get("lengths", DEFAULT_SWEEP_LENGTHS))
    seeds = _parse_seeds(r.get("seeds", "11,22,33"))
    n_runs = int(r.get("runs", len(seeds)))
    out = Path(r.get("out", "sweep.csv"))
    rows = analysis.window_sweep(cfg, corpus, lengths, n_runs, seeds)
    _write_csv(
        out,
        [dataclasses.asdict(row) for row in rows],
        ["window_s", "target", "flow_f1", "packet_f1", "fusion_f1"],
    )
    _write_meta(out, r.resolved)
    return 0


def cmd_analyze(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    corpus = load_corpus(r.get("corpus", "corpus"))
    cfg = _window_config(r)
    out_dir = Path(r.get("out-dir", "analysis"))
    sub_window_s = float(r.get("sub-window-s", 10.0))
    n_bins = int(r.get("bins", 30))
    out_dir.mkdir(parents=True, exist_ok=True)

    # Fisher ranking of every feature for both one-vs-rest tasks.
    table = fusion.featurize_corpus(corpus, cfg)
    fisher_rows = []
    names = {"flow": FlowFeatures.column_names(), "packet": PacketFeatures.column_names()}
    matrices = {"flow": table.X_flow, "packet": table.X_pkt}
    for target in fusion.TARGET_CLASSES:
        y = fusion._binarize(table.labels, target)
        for view in ("flow", "packet"):
            scores = analysis.fisher_score(matrices[view], y)
            order = np.argsort(-scores)
            for rank, j in enumerate(order, start=1):
                fisher_rows.append(
                    {
                        "class": target.value,
                        "view": view,
                        "feature": names[view][j],
                        "fisher_score": "inf" if np.isinf(scores[j]) else scores[j],
                        "rank": rank,
                    }
                )
    fisher_path = out_dir / "fisher.csv"
    _write_csv(fisher_path, fisher_rows, ["class", "view", "feature", "fisher_score", "rank"])
    _write_meta(fisher_path, r.resolved)

    kl_rows = analysis.kl_table(corpus, sub_window_s=sub_window_s, n_bins=n_bins)
    kl_fields = ["client", "reference"] + [
        f"{kind}_{stat}" for kind in analysis.KL_FEATURE_KINDS for stat in ("mean", "std")
    ]
    kl_path = out_dir / "kl.csv"
    _write_csv(kl_path, kl_rows, kl_fields)
    _write_meta(kl_path, r.resolved)
    print(f"wrote {fisher_path} and {kl_path}", file=sys.stderr)
    return 0


def cmd_attack_sim(args) -> int:
    config = _load_config(args.config)
    r = _Resolver(args, config)
    out = Path(r.get("out", "attack.csv"))
    seed = int(r.get("seed", 42))
    denial = float(r.get("denial-frac", 2.0 / 3.0))
    attacked = str(r.get("attacked", "laptop"))
    duration = float(r.get("duration-s", 3600.0))

    client_by_name = {c.name: c for c in flsim.DEFAULT_CLIENT_PROFILES}
    if attacked not in client_by_name:
        raise FlareError(f"unknown client profile {attacked!r}")
    rows = []
    scenarios = (
        ("cnn", flsim.ATTACK_CNN_PROFILE, flsim.ATTACK_RNN_PROFILE),
        ("rnn", flsim.ATTACK_RNN_PROFILE, flsim.ATTACK_CNN_PROFILE),
    )
    for family, model, wrong_model in scenarios:
        specs = [
            flsim.SessionSpec(
                model=model, client=c, link=flsim.ATTACK_LINK,
                duration_s=duration, seed=seed + i,
            )
            for i, c in enumerate(flsim.DEFAULT_CLIENT_PROFILES)
        ]
        for sync_mode in (flsim.SyncMode.SYNC, flsim.SyncMode.ASYNC):
            schedules = {
                "continuous": None,
                "matched": flsim.plan_throttle_schedule(
                    model, client_by_name[attacked], flsim.ATTACK_LINK, denial
                ),
                "misdirected": flsim.plan_throttle_schedule(
                    wrong_model, client_by_name[attacked], flsim.ATTACK_LINK, denial
                ),
            }
            for mode_name, schedule in schedules.items():
                rep = flsim.emulate_throttle(
                    specs, {attacked}, denial, sync_mode, schedule
                )
                rows.append(
                    {
                        "family": family,
                        "sync_mode": sync_mode.value,
                        "throttle": mode_name,
                        "baseline_s": rep.baseline_time_s,
                        "attacked_s": rep.attacked_time_s,
                        "delay_frac": rep.delay_frac,
                        "rounds": rep.attacked_rounds,
                        "cost": rep.cost,
                        "delay_per_cost": rep.delay_frac / rep.cost,
                    }
                )
    _write_csv(
        out,
        rows,
        ["family", "sync_mode", "throttle", "baseline_s", "attacked_s",
         "delay_frac", "rounds", "cost", "delay_per_cost"],
    )
    _write_meta(out, r.resolved)
    return 0


# --- parser -------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-s", type=float, dest="window_s")
    p.add_argument("--stride-s", type=float, dest="stride_s")
    p.add_argument("--tau-bytes", type=int, dest="tau_bytes")


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    _add_window_flags(p)
    p.add_argument("--fusion-kind", choices=["logreg", "gbt"], dest="fusion_kind")
    p.add_argument("--n-trees", type=int, dest="n_trees")
    p.add_argument("--max-depth", type=int, dest="max_depth")
    p.add_argument("--logreg-l2", type=float, dest="logreg_l2")
    p.add_argument("--gbt-learning-rate", type=float, dest="gbt_learning_rate")
    p.add_argument("--gbt-rounds", type=int, dest="gbt_rounds")
    p.add_argument("--folds", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flare",
        description="Fingerprint FL client architectures from encrypted-traffic metadata.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic labeled corpus")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-per-spec", type=int, dest="n_per_spec")
    p.add_argument("--duration-s", type=float, dest="duration_s")
    p.add_argument("--scenario", help="JSON scenario file with session spec templates")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("ingest", help="extract a client trace from a capture CSV")
    _add_common(p)
    p.add_argument("--capture")
    p.add_argument("--ap")
    p.add_argument("--client")
    p.add_argument("--out")
    p.add_argument("--family", choices=[f.value for f in ModelFamily])
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("segment", help="window a trace and report the activity filter")
    _add_common(p)
    p.add_argument("--trace")
    p.add_argument("--out")
    _add_window_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("featurize", help="write the per-window feature matrix CSV")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    _add_window_flags(p)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train the fingerprinting pipeline")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--report")
    p.add_argument("--grid-search", action="store_const", const=True, dest="grid_search")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a trace with a trained pipeline")
    _add_common(p)
    p.add_argument("--pipeline")
    p.add_argument("--trace")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    for name, fn in (("eval-closed", cmd_eval_closed), ("eval-open", cmd_eval_open)):
        p = sub.add_parser(name, help=f"{name.replace('-', ' ')} evaluation")
        _add_common(p)
        p.add_argument("--corpus")
        p.add_argument("--out")
        p.add_argument("--runs", type=int)
        p.add_argument("--seeds")
        p.add_argument("--test-frac", type=float, dest="test_frac")
        if name == "eval-open":
            p.add_argument("--holdout", help="comma-separated model names excluded from training")
        _add_pipeline_flags(p)
        p.set_defaults(func=fn)

    p = sub.add_parser("sweep", help="observation-window length sweep")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--lengths")
    p.add_argument("--runs", type=int)
    p.add_argument("--seeds")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="Fisher ranking and per-client KL table")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--sub-window-s", type=float, dest="sub_window_s")
    p.add_argument("--bins", type=int)
    _add_window_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("attack-sim", help="resource-denial attack emulation grid")
    _add_common(p)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--denial-frac", type=float, dest="denial_frac")
    p.add_argument("--attacked")
    p.add_argument("--duration-s", type=float, dest="duration_s")
    p.set_defaults(func=cmd_attack_sim)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlareError as exc:
        record = {"error": type(exc).__name__, "detail": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
