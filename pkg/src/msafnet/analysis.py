"""Accident-window analysis: attention delay (ADF), average maps, frame statistics."""
from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import netpbm
from .data import AccidentAnnotation, VideoRecord

SOURCES = ("human_gt", "model")


@dataclass(frozen=True)
class ADFRecord:
    video_id: str
    category_id: int
    first_hit_frame: int | None
    adf: int | None
    source: str = "human_gt"

    @property
    def hit(self) -> bool:
        return self.first_hit_frame is not None


def peak_location(m: np.ndarray) -> tuple[int, int]:
    """``(col, row)`` of the global maximum; first in raster order on ties."""
    m = np.asarray(m)
    row, col = np.unravel_index(int(np.argmax(m)), m.shape)
    return int(col), int(row)


def compute_adf(maps: Sequence[np.ndarray], ann: AccidentAnnotation, source: str = "human_gt") -> ADFRecord:
    """First frame whose attention peak lies inside a crash box, relative to ``aw_start``.

    The whole video is searched, so anticipation yields a negative delay.
    A video whose attention never hits the object gets no delay.
    """
    if not ann.crash_boxes:
        raise ValueError(f"{ann.video_id}: no crash-object boxes; video cannot enter the ADF statistic")
    if source not in SOURCES:
        raise ValueError(f"source must be one of {SOURCES}, got {source!r}")
    boxes_by_frame = defaultdict(list)
    for b in ann.crash_boxes:
        boxes_by_frame[b.frame].append(b)
    for t in sorted(boxes_by_frame):
        if t >= len(maps):
            break
        col, row = peak_location(maps[t])
        if any(b.contains(col, row) for b in boxes_by_frame[t]):
            return ADFRecord(ann.video_id, ann.category_id, t, t - ann.aw_start, source)
    return ADFRecord(ann.video_id, ann.category_id, None, None, source)


@dataclass
class CategoryADF:
    category_id: int
    source: str
    delays: list[int] = field(default_factory=list)
    misses: int = 0

    @property
    def hits(self) -> int:
        return len(self.delays)

    @property
    def mean_adf(self) -> float | None:
        return float(np.mean(self.delays)) if self.delays else None


@dataclass
class ADFSummary:
    rows: list[CategoryADF]

    def get(self, category_id: int, source: str) -> CategoryADF:
        for r in self.rows:
            if r.category_id == category_id and r.source == source:
                return r
        raise KeyError((category_id, source))

    def csv_lines(self) -> list[str]:
        lines = ["category_id,source,mean_adf,hits,misses"]
        for r in self.rows:
            mean = "" if r.mean_adf is None else repr(r.mean_adf)
            lines.append(f"{r.category_id},{r.source},{mean},{r.hits},{r.misses}")
        return lines


def summarize_adf(records: Iterable[ADFRecord]) -> ADFSummary:
    """Per (source, category) mean over hits; rows ascend by mean, misses-only rows last."""
    groups: dict[tuple[str, int], CategoryADF] = {}
    for rec in records:
        key = (rec.source, rec.category_id)
        grp = groups.setdefault(key, CategoryADF(rec.category_id, rec.source))
        if rec.adf is None:
            grp.misses += 1
        else:
            grp.delays.append(rec.adf)
    rows = sorted(groups.values(), key=lambda g: (
        g.source, g.mean_adf is None, g.mean_adf if g.mean_adf is not None else 0.0, g.category_id))
    return ADFSummary(rows)


def mean_map(maps: Iterable[np.ndarray]) -> np.ndarray:
    """Pixel-wise mean rescaled to a maximum of 1."""
    total = None
    count = 0
    for m in maps:
        m = np.asarray(m, dtype=np.float64)
        total = m.copy() if total is None else total + m
        count += 1
    if count == 0:
        raise ValueError("no maps to average")
    avg = total / count
    peak = avg.max()
    return avg / peak if peak > 0 else avg


def average_attention_map(videos: Sequence[VideoRecord], behavior_type: str | None = None) -> np.ndarray:
    """Average of every attention map of the videos showing ``behavior_type``."""
    chosen = [v for v in videos if behavior_type is None or v.annotation.behavior_type == behavior_type]
    if not chosen:
        raise ValueError(f"no videos with behavior_type {behavior_type!r}")
    return mean_map(netpbm.load_map(p, "fta") for v in chosen for p in v.attention_paths)


def map_moments(m: np.ndarray) -> dict[str, float]:
    """Centroid and second central moments of a non-negative map, in pixels."""
    m = np.asarray(m, dtype=np.float64)
    ys, xs = np.mgrid[0:m.shape[0], 0:m.shape[1]]
    w = m / m.sum()
    cx, cy = float((w * xs).sum()), float((w * ys).sum())
    return {"cx": cx, "cy": cy,
            "var_x": float((w * (xs - cx) ** 2).sum()),
            "var_y": float((w * (ys - cy) ** 2).sum())}


@dataclass(frozen=True)
class TemporalStats:
    videos: int
    total: int
    before: int
    window: int
    after: int

    @property
    def averages(self) -> tuple[float, float, float, float]:
        n = self.videos
        return self.total / n, self.before / n, self.window / n, self.after / n

    @property
    def percentages(self) -> tuple[float, float, float]:
        return (100.0 * self.before / self.total, 100.0 * self.window / self.total,
                100.0 * self.after / self.total)

    def table_lines(self) -> list[str]:
        avg = self.averages
        pct = self.percentages
        return [
            "statistic,total,before_aw,aw,after_aw",
            f"total_frames,{self.total},{self.before},{self.window},{self.after}",
            f"average_frames,{avg[0]:.0f},{avg[1]:.0f},{avg[2]:.0f},{avg[3]:.0f}",
            f"percentage,100,{pct[0]:.1f},{pct[1]:.1f},{pct[2]:.1f}",
        ]


def temporal_stats(annotations: Iterable[AccidentAnnotation]) -> TemporalStats:
    """Frame totals of the before-window / window / after-window partition."""
    n = total = before = window = after = 0
    for a in annotations:
        parts = (a.before_aw, a.aw_length, a.after_aw)
        if min(parts) < 0 or sum(parts) != a.num_frames:
            raise ValueError(f"{a.video_id}: accident window does not partition the video")
        n += 1
        total += a.num_frames
        before += parts[0]
        window += parts[1]
        after += parts[2]
    if n == 0:
        raise ValueError("no annotations")
    return TemporalStats(n, total, before, window, after)
