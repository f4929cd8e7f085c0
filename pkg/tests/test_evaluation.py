import math
import shutil

import numpy as np
import pytest

from msafnet import netpbm
from msafnet.evaluation import CSV_HEADER, FrameMetrics, MetricReport, evaluate_run, pred_path
from msafnet.metrics import METRIC_NAMES


@pytest.fixture
def toy_run(small_synth, tmp_path):
    """Two ground-truth videos and a prediction directory with two frames left out."""
    root, records = small_synth
    gt = tmp_path / "gt"
    anns = []
    for rec in records[:2]:
        shutil.copytree(root / rec.video_id, gt / rec.video_id)
        anns.append(rec.annotation)
    pred = tmp_path / "pred"
    rng = np.random.default_rng(0)
    dropped = {(anns[0].video_id, 3), (anns[1].video_id, 0)}
    for a in anns:
        for t in range(a.num_frames):
            if (a.video_id, t) in dropped:
                continue
            path = pred_path(pred, a.video_id, t)
            path.parent.mkdir(parents=True, exist_ok=True)
            noisy = netpbm.read(gt / a.video_id / "attention" / path.name).astype(np.int16)
            noisy = np.clip(noisy + rng.integers(0, 60, size=noisy.shape), 0, 255).astype(np.uint8)
            netpbm.write(path, noisy)
    return pred, gt, anns, dropped


def test_toy_run_aggregates_equal_hand_averages(toy_run):
    pred, gt, anns, dropped = toy_run
    report = evaluate_run(pred, gt, anns, splits=10)
    assert set(report.missing) == dropped
    assert len(report.records) == sum(a.num_frames for a in anns) - 2
    means = report.global_means()
    for j, name in enumerate(METRIC_NAMES):
        vals = [r.values[j] for r in report.records if not math.isnan(r.values[j])]
        assert means[name] == pytest.approx(sum(vals) / len(vals), rel=1e-12)
        for a in anns:
            own = [r.values[j] for r in report.records if r.video_id == a.video_id and not math.isnan(r.values[j])]
            assert report.video_means()[a.video_id][name] == pytest.approx(sum(own) / len(own), rel=1e-12)


def test_evaluation_is_deterministic_and_outputs_are_well_formed(toy_run):
    pred, gt, anns, dropped = toy_run
    a = evaluate_run(pred, gt, anns, seed=3, splits=5)
    b = evaluate_run(pred, gt, anns, seed=3, splits=5)
    assert a.csv_lines() == b.csv_lines()
    assert a.csv_lines()[0] == CSV_HEADER
    summary = a.summary_lines()
    for name in METRIC_NAMES:
        assert any(line.startswith(f"{name}=") for line in summary)
    assert sum(line.startswith("missing_frame=") for line in summary) == 2


def test_empty_intersection_is_an_error(small_synth, tmp_path):
    root, records = small_synth
    with pytest.raises(ValueError, match="no frame"):
        evaluate_run(tmp_path / "nothing", root, [records[0].annotation], splits=2)


def test_undefined_values_are_counted_not_averaged():
    nan = float("nan")
    rep = MetricReport([FrameMetrics("a", 0, (1.0, 2.0, 0.5, 0.1, 0.9, nan)),
                        FrameMetrics("a", 1, (3.0, 4.0, 0.5, 0.3, 0.7, 0.6))])
    assert rep.global_means()["kldiv"] == 2.0
    assert rep.global_means()["auc_s"] == 0.6
    assert rep.undefined_count("auc_s") == 1
    assert rep.csv_lines()[1].endswith(",nan")


def test_merge_is_order_independent():
    x = MetricReport([FrameMetrics("b", 0, (1.0,) * 6)], [("b", 1)])
    y = MetricReport([FrameMetrics("a", 2, (2.0,) * 6)], [("a", 0)])
    assert x.merge(y) == y.merge(x)
    assert [r.video_id for r in x.merge(y).records] == ["a", "b"]
