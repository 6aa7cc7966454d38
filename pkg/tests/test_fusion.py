import dataclasses
import json
import math

import numpy as np
import pytest

from flare import flsim
from flare.errors import (
    DimensionMismatchError,
    FilteredWindowError,
    InsufficientDataError,
    LengthMismatchError,
    UnlabeledWindowError,
)
from flare.fusion import (
    FlarePipeline,
    MetaFeature,
    PipelineConfig,
    binarize_labels,
    build_meta_features,
    featurize_corpus,
    fusion_loss,
    meta_matrix,
    predict,
    predict_trace,
    train_flare,
    train_on_table,
)
from flare.labels import ArchLabel, ModelFamily
from flare.segmentation import TrafficWindow, WindowConfig, WindowOrigin

CLIENT = "02:00:00:00:00:01"


def labeled_window(family, sizes=(1000, 1200), start=0.0):
    label = None
    if family is not None:
        name = {"cnn": "resnet18", "rnn": "bilstm", "other": "xgb_tab"}[family]
        label = ArchLabel(ModelFamily(family), name, "ds")
    n = len(sizes)
    return TrafficWindow(
        start_s=start,
        duration_s=300.0,
        timestamps=start + np.linspace(0.0, 200.0, n),
        sizes=np.asarray(sizes, dtype=int),
        uplink=np.ones(n, dtype=bool),
        origin=WindowOrigin(CLIENT, "t", 0),
        label=label,
    )


class StubModel:
    def __init__(self, value):
        self.value = value

    def predict_proba(self, X):
        return np.full(np.atleast_2d(X).shape[0], self.value)


class TestBinarizeLabels:
    def test_cnn_target(self):
        windows = [labeled_window("cnn"), labeled_window("rnn"), labeled_window("other")]
        assert binarize_labels(windows, ModelFamily.CNN).tolist() == [1, 0, 0]

    def test_rnn_target(self):
        windows = [labeled_window("cnn"), labeled_window("rnn"), labeled_window("other")]
        assert binarize_labels(windows, ModelFamily.RNN).tolist() == [0, 1, 0]

    def test_counting_oracle_on_mixed_corpus(self, rng):
        families = [["cnn", "rnn", "other"][i] for i in rng.integers(0, 3, size=60)]
        windows = [labeled_window(f) for f in families]
        y = binarize_labels(windows, ModelFamily.CNN)
        assert int(y.sum()) == families.count("cnn")

    def test_unlabeled_rejected(self):
        with pytest.raises(UnlabeledWindowError):
            binarize_labels([labeled_window(None)], ModelFamily.CNN)


class TestBuildMetaFeatures:
    def test_stub_models_give_eq2_pair(self):
        metas = build_meta_features(
            StubModel(0.9), StubModel(0.8), [labeled_window("cnn")], ModelFamily.CNN
        )
        assert metas[0].p_flow == 0.9 and metas[0].p_pkt == 0.8
        assert metas[0].target_class == ModelFamily.CNN

    def test_boundary_probabilities_accepted(self):
        metas = build_meta_features(
            StubModel(0.0), StubModel(1.0), [labeled_window("cnn")], ModelFamily.CNN
        )
        assert metas[0].p_flow == 0.0 and metas[0].p_pkt == 1.0

    def test_out_of_range_probability_rejected(self):
        with pytest.raises(ValueError):
            MetaFeature(1.5, 0.5, ModelFamily.CNN)

    def test_matches_per_window_recomputation(self, rng, small_corpus):
        table = featurize_corpus(small_corpus[:6], WindowConfig())
        pipeline, _ = train_on_table(
            featurize_corpus(small_corpus, WindowConfig()), PipelineConfig(seed=3)
        )
        h_f, h_p = pipeline.h_f["cnn"], pipeline.h_p["cnn"]
        windows = []
        for trace in small_corpus[:6]:
            from flare.segmentation import filter_active, segment

            windows.extend(filter_active(segment(trace, WindowConfig()), 66))
        metas = build_meta_features(h_f, h_p, windows, ModelFamily.CNN)
        mat = meta_matrix(metas)
        from flare.features import flow_features, packet_features

        for i, w in enumerate(windows):
            pf = h_f.predict_proba(flow_features(w).as_vector().reshape(1, -1))[0]
            pp = h_p.predict_proba(packet_features(w).as_vector().reshape(1, -1))[0]
            assert mat[i, 0] == pf and mat[i, 1] == pp

    def test_dimension_mismatch(self):
        class SizedStub(StubModel):
            n_features = 7

        with pytest.raises(DimensionMismatchError):
            build_meta_features(
                SizedStub(0.5), StubModel(0.5), [labeled_window("cnn")], ModelFamily.CNN
            )


class TestFusionLoss:
    def test_perfect_confident_predictions(self):
        y = np.array([1.0, 0.0, 1.0])
        assert fusion_loss(np.array([1.0, 0.0, 1.0]), y) <= 1e-11

    def test_half_everywhere_is_ln2(self):
        p = np.full(10, 0.5)
        y = np.array([0.0, 1.0] * 5)
        assert fusion_loss(p, y) == pytest.approx(math.log(2), abs=1e-12)

    def test_matches_direct_summation_oracle(self, rng):
        p = rng.random(200)
        y = rng.integers(0, 2, size=200).astype(float)
        expected = 0.0
        for pi, yi in zip(p, y):
            pc = min(max(pi, 1e-12), 1 - 1e-12)
            expected += -(yi * math.log(pc) + (1 - yi) * math.log(1 - pc))
        expected /= len(p)
        assert fusion_loss(p, y) == pytest.approx(expected, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            fusion_loss(np.zeros(3), np.zeros(4))


class TestTrainFlare:
    def test_separable_corpus_oof_fusion_f1(self, small_corpus):
        pipeline, report = train_flare(small_corpus, PipelineConfig(seed=7))
        for target in ("cnn", "rnn"):
            assert report["classes"][target]["fusion"]["f1"] >= 0.95

    def test_no_rnn_traces_insufficient(self, small_corpus):
        cnn_other = [
            t for t in small_corpus if t.label.family in (ModelFamily.CNN, ModelFamily.OTHER)
        ]
        with pytest.raises(InsufficientDataError) as exc:
            train_flare(cnn_other, PipelineConfig(seed=1))
        assert exc.value.target_class == "rnn"

    def test_single_family_rejected(self, small_corpus):
        only_cnn = [t for t in small_corpus if t.label.family == ModelFamily.CNN]
        with pytest.raises(InsufficientDataError):
            train_flare(only_cnn, PipelineConfig(seed=1))

    def test_retrain_same_seed_identical_serialization(self, small_corpus):
        cfg = PipelineConfig(seed=11)
        p1, _ = train_flare(small_corpus, cfg)
        p2, _ = train_flare(small_corpus, cfg)
        assert json.dumps(p1.to_dict(), sort_keys=True) == json.dumps(p2.to_dict(), sort_keys=True)

    def test_gbt_fusion_kind(self, small_corpus):
        pipeline, report = train_flare(
            small_corpus, PipelineConfig(seed=3, fusion_kind="gbt")
        )
        assert report["classes"]["cnn"]["fusion"]["f1"] >= 0.9
        record = pipeline.to_dict()
        assert record["g"]["cnn"]["kind"] == "gbt"

    def test_out_of_fold_meta_differs_from_in_fold(self, small_corpus):
        """Leakage guard: in-fold base predictions differ from out-of-fold."""
        table = featurize_corpus(small_corpus, WindowConfig())
        cfg = PipelineConfig(seed=5)
        pipeline, _ = train_on_table(table, cfg)
        from flare.fusion import _binarize
        from flare.learners import Dataset, fit_forest
        from flare.learners.model_selection import stratified_indices

        y = _binarize(table.labels, ModelFamily.CNN)
        in_fold = pipeline.h_f["cnn"].predict_proba(table.X_flow)
        # out-of-fold recomputation with the same fold structure as training
        from flare.fusion import _derived_seed

        folds = stratified_indices(
            y, cfg.n_folds, np.random.default_rng(_derived_seed(cfg.seed, 0, 99))
        )
        oof = np.empty(len(y))
        for fi, fold in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(y)), fold)
            model = fit_forest(
                Dataset(table.X_flow[train_idx], y[train_idx]),
                dataclasses.replace(cfg.forest, seed=_derived_seed(cfg.seed, 0, 0, fi)),
            )
            oof[fold] = model.predict_proba(table.X_flow[fold])
        assert not np.array_equal(in_fold, oof)


class TestPredict:
    def make_stub_pipeline(self, g_cnn=0.99, g_rnn=0.01, threshold=0.5):
        return FlarePipeline(
            window=WindowConfig(),
            fusion_kind="logreg",
            h_f={"cnn": StubModel(0.9), "rnn": StubModel(0.1)},
            h_p={"cnn": StubModel(0.9), "rnn": StubModel(0.1)},
            g={"cnn": StubModel(g_cnn), "rnn": StubModel(g_rnn)},
            threshold=threshold,
        )

    def test_cnn_verdict(self):
        pred = predict(self.make_stub_pipeline(0.99, 0.01), labeled_window("cnn"))
        assert pred.verdict == "cnn"
        assert pred.per_class["cnn"].positive and not pred.per_class["rnn"].positive

    def test_unknown_verdict(self):
        pred = predict(self.make_stub_pipeline(0.2, 0.3), labeled_window("other"))
        assert pred.verdict == "unknown"

    def test_conflict_verdict(self):
        pred = predict(self.make_stub_pipeline(0.9, 0.8), labeled_window("cnn"))
        assert pred.verdict == "conflict"
        assert pred.per_class["cnn"].p_fused == 0.9
        assert pred.per_class["rnn"].p_fused == 0.8

    def test_filtered_window_rejected(self):
        small = labeled_window("cnn", sizes=(60, 50))
        with pytest.raises(FilteredWindowError):
            predict(self.make_stub_pipeline(), small)

    def test_threshold_monotonicity(self, small_corpus):
        pipeline, _ = train_flare(small_corpus, PipelineConfig(seed=2))
        table = featurize_corpus(small_corpus, pipeline.window)
        from flare.fusion import _predict_rows

        probs = _predict_rows(pipeline, table.X_flow, table.X_pkt)
        fused = probs["cnn"]["fusion"]
        counts = [(fused >= thr).sum() for thr in (0.1, 0.3, 0.5, 0.7, 0.9)]
        assert counts == sorted(counts, reverse=True)

    def test_exactly_one_verdict_per_window(self, small_corpus):
        pipeline, _ = train_flare(small_corpus, PipelineConfig(seed=2))
        verdicts = {"cnn", "rnn", "unknown", "conflict"}
        for trace in small_corpus[:4]:
            for pred in predict_trace(pipeline, trace):
                assert pred.verdict in verdicts

    def test_predict_trace_all_filtered(self, small_corpus):
        pipeline, _ = train_flare(small_corpus, PipelineConfig(seed=2))
        from flare.ingest import ClientTrace

        quiet = ClientTrace(CLIENT, [0.0, 1.0], [50, 60], [True, False])
        with pytest.raises(FilteredWindowError):
            predict_trace(pipeline, quiet)


class TestPipelineSerialization:
    def test_round_trip_identical_predictions(self, small_corpus, tmp_path):
        pipeline, _ = train_flare(small_corpus, PipelineConfig(seed=4))
        path = tmp_path / "pipe.json"
        pipeline.save(path)
        loaded = FlarePipeline.load(path)
        table = featurize_corpus(small_corpus, pipeline.window)
        from flare.fusion import _predict_rows

        a = _predict_rows(pipeline, table.X_flow, table.X_pkt)
        b = _predict_rows(loaded, table.X_flow, table.X_pkt)
        for target in ("cnn", "rnn"):
            for view in ("flow", "packet", "fusion"):
                assert np.array_equal(a[target][view], b[target][view])

    def test_version_check(self, small_corpus, tmp_path):
        pipeline, _ = train_flare(small_corpus, PipelineConfig(seed=4))
        record = pipeline.to_dict()
        record["version"] = 99
        with pytest.raises(ValueError):
            FlarePipeline.from_dict(record)
