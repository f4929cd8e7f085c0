"""Run-level evaluation: pair predicted and ground-truth maps, score, aggregate.

Predictions use the ground-truth directory layout
(``<video_id>/attention/%06d.pgm``), so a prediction directory can be fed
straight back into the ADF analysis.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .data import AccidentAnnotation, load_annotations, video_paths
from .metrics import METRIC_NAMES, FixationSet, all_metrics, extract_fixations

CSV_HEADER = "video_id,frame," + ",".join(METRIC_NAMES)


@dataclass(frozen=True)
class FrameMetrics:
    video_id: str
    frame: int
    values: tuple[float, ...]  # in METRIC_NAMES order, NaN when undefined

    def get(self, name: str) -> float:
        return self.values[METRIC_NAMES.index(name)]


def _mean(xs: list[float]) -> float:
    return float(np.mean(xs)) if xs else float("nan")


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(x)


@dataclass
class MetricReport:
    records: list[FrameMetrics] = field(default_factory=list)
    missing: list[tuple[str, int]] = field(default_factory=list)

    def merge(self, other: MetricReport) -> MetricReport:
        """Order-independent union of two reports."""
        recs = sorted(self.records + other.records, key=lambda r: (r.video_id, r.frame))
        return MetricReport(recs, sorted(self.missing + other.missing))

    def defined(self, name: str, video_id: str | None = None) -> list[float]:
        return [r.get(name) for r in self.records
                if (video_id is None or r.video_id == video_id) and not math.isnan(r.get(name))]

    def undefined_count(self, name: str) -> int:
        return sum(math.isnan(r.get(name)) for r in self.records)

    def global_means(self) -> dict[str, float]:
        return {m: _mean(self.defined(m)) for m in METRIC_NAMES}

    def video_means(self) -> dict[str, dict[str, float]]:
        vids = sorted({r.video_id for r in self.records})
        return {v: {m: _mean(self.defined(m, v)) for m in METRIC_NAMES} for v in vids}

    def csv_lines(self) -> list[str]:
        return [CSV_HEADER] + [f"{r.video_id},{r.frame}," + ",".join(_fmt(x) for x in r.values)
                               for r in self.records]

    def video_csv_lines(self) -> list[str]:
        lines = ["video_id," + ",".join(METRIC_NAMES)]
        for vid, means in self.video_means().items():
            lines.append(vid + "," + ",".join(_fmt(means[m]) for m in METRIC_NAMES))
        return lines

    def summary_lines(self) -> list[str]:
        lines = [f"frames={len(self.records)}", f"missing={len(self.missing)}"]
        for m, v in self.global_means().items():
            lines.append(f"{m}={_fmt(v)}")
        for m in METRIC_NAMES:
            lines.append(f"undefined_{m}={self.undefined_count(m)}")
        lines += [f"missing_frame={vid}:{t}" for vid, t in self.missing]
        return lines


def pred_path(pred_dir, video_id: str, frame: int) -> Path:
    return video_paths(pred_dir, video_id, frame + 1)[2][frame]


def evaluate_run(pred_dir, gt_dir, annotations: Sequence[AccidentAnnotation] | None = None,
                 seed: int = 0, splits: int = 100) -> MetricReport:
    """Score every ground-truth frame that has a prediction.

    Fixations come from the ground-truth map of each frame. Shuffled-AUC
    negatives are the fixations of all frames of the *other* videos.
    Frames without a prediction are listed in ``missing``; metrics that are
    undefined on a frame are stored as NaN and left out of the means.
    """
    if annotations is None:
        annotations = load_annotations(gt_dir)
    annotations = sorted(annotations, key=lambda a: a.video_id)
    gt_maps: dict[str, list[np.ndarray]] = {}
    fixations: dict[str, list[FixationSet | None]] = {}
    for a in annotations:
        maps = [netpbm.load_map(p, "fta") for p in video_paths(gt_dir, a.video_id, a.num_frames)[2]]
        gt_maps[a.video_id] = maps
        fixations[a.video_id] = [extract_fixations(m) if m.max() > 0 else None for m in maps]

    report = MetricReport()
    for vi, a in enumerate(annotations):
        pool = [f for other, fs in fixations.items() if other != a.video_id for f in fs if f is not None]
        for t, gt in enumerate(gt_maps[a.video_id]):
            path = pred_path(pred_dir, a.video_id, t)
            if not path.is_file():
                report.missing.append((a.video_id, t))
                continue
            pred = netpbm.load_map(path, "fta")
            fix = fixations[a.video_id][t]
            if fix is None:
                fix = FixationSet((), gt.shape[1], gt.shape[0])
            vals = all_metrics(gt, pred, fix, pool, seed=[seed, vi, t], splits=splits)
            report.records.append(FrameMetrics(a.video_id, t, tuple(vals[m] for m in METRIC_NAMES)))
    if not report.records:
        raise ValueError("no frame has both a prediction and a ground-truth map")
    return report
