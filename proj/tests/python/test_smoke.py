"""Smoke tests for the pymaskset module: one pass over the pipeline verbs.

Runs under a bare interpreter (no pytest needed):
    PYTHONPATH=<build dir> python3 tests/python/test_smoke.py
"""

import math
import sys
import tempfile

import pymaskset as mk


def make_corpus(seed=81):
    cfg = mk.SynthConfig()
    cfg.n_classes = 6
    cfg.n_clips = 320
    cfg.feature_dim = 6
    cfg.patches_per_clip = 2
    cfg.labels_min = 1
    cfg.labels_max = 2
    cfg.seed = seed
    return mk.generate_synthetic(cfg)


def test_generate():
    corpus = make_corpus()
    assert corpus.n_clips == 320
    assert corpus.n_classes == 6
    assert len(corpus.class_priors) == 6
    assert math.isclose(sum(corpus.class_priors), 1.45, rel_tol=0.2)
    assert len(corpus.split_clip_ids("train")) + len(
        corpus.split_clip_ids("eval")
    ) == 320
    assert corpus.injection_log, "missing-label injection should be active"
    for clip_id, class_id in corpus.injection_log:
        row = corpus.labels.clip_ids.index(clip_id)
        assert corpus.labels.state(row, class_id) == "IN"
        assert corpus.truth.state(row, class_id) == "EP"

    again = make_corpus()
    assert corpus.labels == again.labels


def test_corpus_roundtrip():
    corpus = make_corpus()
    with tempfile.TemporaryDirectory() as tmp:
        mk.save_corpus(corpus, tmp + "/corpus")
        back = mk.load_corpus(tmp + "/corpus")
    assert back.labels == corpus.labels
    assert back.injection_log == corpus.injection_log


def test_train_score_evaluate():
    corpus = make_corpus()
    tc = mk.TrainConfig()
    tc.epochs = 3
    tc.seed = 1
    model = mk.train(corpus, tc)
    assert model.capacity == "linear"
    assert model.n_params == 6 * 6 + 6

    scores = mk.score(model, corpus, "eval")
    assert scores.n_clips == len(corpus.split_clip_ids("eval"))
    for v in scores.row(0):
        assert 0.0 < v < 1.0

    result = mk.evaluate(scores, mk.split_labels(corpus, "eval"))
    assert 0.0 < result.macro_lwlrap <= 1.0
    assert math.isfinite(result.macro_dprime)
    assert len(result.per_class_lwlrap) == 6
    pooled = mk.lwlrap_pooled(scores, mk.split_labels(corpus, "eval"))
    assert 0.0 < pooled <= 1.0

    # determinism across runs
    model2 = mk.train(corpus, tc)
    assert model == model2

    hidden = mk.TrainConfig()
    hidden.epochs = 1
    hidden.hidden_width = 4
    hmodel = mk.train(corpus, hidden, "hidden")
    assert hmodel.capacity == "hidden"
    assert hmodel.hidden == 4


def test_relabel_pipeline():
    corpus = make_corpus()
    tc = mk.TrainConfig()
    tc.epochs = 3
    teacher = mk.train(corpus, tc)
    scores = mk.score(teacher, corpus, "train")
    train_labels = mk.split_labels(corpus, "train")

    thresholds = mk.compute_thresholds(scores, train_labels, 0.0)
    assert all(c == 0 for c in thresholds.counts)

    thresholds = mk.compute_thresholds(scores, train_labels, 0.05)
    enhanced = mk.flag_missing(train_labels, scores, thresholds, "teacher-1")
    assert enhanced.teacher_id == "teacher-1"
    flagged = sum(
        1
        for i in range(enhanced.table.n_clips)
        for c in range(enhanced.table.n_classes)
        if enhanced.table.state(i, c) == "IG"
    )
    assert flagged == sum(thresholds.counts)
    assert flagged > 0

    mask = mk.build_mask(enhanced)
    zeros = sum(
        1
        for i in range(mask.n_clips)
        for c in range(mask.n_classes)
        if mask.at(i, c) == 0
    )
    assert zeros == flagged

    with tempfile.TemporaryDirectory() as tmp:
        mk.export_audit(enhanced, scores, 5, tmp + "/audit.csv",
                        corpus.injection_log)
        with open(tmp + "/audit.csv") as fh:
            header = fh.readline().strip()
        assert header == "class_id,clip_id,score,was_injected"

    # a masked student trains on the full corpus label table with IG merged in
    full = corpus.labels
    merged = mk.merge_enhanced(full, enhanced)
    assert merged.clip_ids == full.clip_ids
    ig_cells = sum(
        1
        for i in range(merged.n_clips)
        for c in range(merged.n_classes)
        if merged.state(i, c) == "IG" and full.state(i, c) != "IG"
    )
    assert ig_cells == flagged
    student = mk.train(corpus, tc, "linear", merged)
    assert student != teacher


def test_metrics_scalars():
    assert mk.roc_auc([0.8, 0.4], [0.6, 0.2]) == 0.75
    assert mk.inv_norm_cdf(0.5) == 0.0
    assert math.isclose(mk.dprime(0.9), 1.8123876, rel_tol=1e-6)
    try:
        mk.roc_auc([], [0.5])
    except mk.EvalError:
        pass
    else:
        raise AssertionError("expected EvalError for an empty side")


def test_model_checkpoint():
    corpus = make_corpus()
    tc = mk.TrainConfig()
    tc.epochs = 1
    model = mk.train(corpus, tc)
    with tempfile.TemporaryDirectory() as tmp:
        mk.save_model(model, tmp + "/m.mpm", tc)
        back = mk.load_model(tmp + "/m.mpm")
    assert back.n_params == model.n_params
    assert back.capacity == model.capacity


def test_sweep():
    corpus = make_corpus()
    cfg = mk.SweepConfig()
    cfg.grid_percent = [0.0, 2.0]
    cfg.seeds = [1]
    tc = mk.TrainConfig()
    tc.epochs = 2
    cfg.train = tc
    with tempfile.TemporaryDirectory() as tmp:
        cfg.results_dir = tmp + "/results"
        result = mk.run_sweep(corpus, cfg)
        assert not result.any_failed
        assert result.n_trained == 2
        assert len(result.curves) == 1
        curve = result.curves[0]
        assert [p.fraction_percent for p in curve.points] == [0.0, 2.0]
        assert all(p.n_seeds == 1 for p in curve.points)
        best = mk.best_operating_point(curve, "lwlrap")
        assert best.fraction_percent in (0.0, 2.0)

        again = mk.run_sweep(corpus, cfg)
        assert again.n_trained == 0
        scanned = mk.aggregate_results(cfg.results_dir)
        assert len(scanned.curves) == 1
        assert scanned.curves[0].points[0].lwlrap_mean == \
            curve.points[0].lwlrap_mean


def main():
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_")]
    for test in tests:
        test()
        print(f"{test.__name__}: ok")
    print(f"{len(tests)} smoke tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
