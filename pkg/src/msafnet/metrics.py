"""Saliency metrics (KLdiv, NSS, SIM, CC, AUC-Judd, shuffled AUC) and fixation extraction.

Maps are 2-D arrays; fixations are integer ``(x, y)`` = ``(col, row)`` pixels.
KLdiv and CC reuse the training-loss code on float64 tensors so that metric
and loss cannot drift apart.
"""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .losses import KL_EPS, correlation, kl_loss
from .tensor import Tensor

REFERENCE_WIDTH = 256
NMS_RADIUS = 16
MAX_FIXATIONS = 10
MIN_FIXATIONS = 5
_EIGHT = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class FixationSet:
    points: tuple[tuple[int, int], ...]
    width: int
    height: int

    def __post_init__(self):
        if len(set(self.points)) != len(self.points):
            raise ValueError("duplicate fixation points")
        for x, y in self.points:
            if not (0 <= x < self.width and 0 <= y < self.height):
                raise ValueError(f"fixation ({x}, {y}) outside {self.width}x{self.height} map")

    def __len__(self) -> int:
        return len(self.points)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width), dtype=bool)
        for x, y in self.points:
            m[y, x] = True
        return m

    @classmethod
    def from_mask(cls, mask: np.ndarray) -> FixationSet:
        rows, cols = np.nonzero(mask)
        return cls(tuple((int(c), int(r)) for r, c in zip(rows, cols)), mask.shape[1], mask.shape[0])


def _as_map(m, name: str = "map") -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    return m


# --------------------------------------------------------- fixation extraction
def local_maxima(m: np.ndarray) -> list[tuple[int, int]]:
    """Positive 8-neighbourhood maxima as ``(x, y)``, in raster order.

    A peak is a connected set of equal pixels (a single pixel or a flat
    plateau) with no larger neighbour anywhere along its border. Each peak
    is reported once, at its first pixel in raster order. Plateaus that
    touch a larger value are not peaks, which matters for quantised maps
    whose smooth tails break into wide flat rings.
    """
    m = _as_map(m)
    h, w = m.shape
    keep = (m > 0) & (m == ndimage.maximum_filter(m, footprint=_EIGHT, mode="constant", cval=-np.inf))
    pad_m = np.full((h + 2, w + 2), np.nan)
    pad_m[1:-1, 1:-1] = m
    shifts = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    equal = [pad_m[1 + dy:1 + dy + h, 1 + dx:1 + dx + w] == m for dy, dx in shifts]
    # a plateau is a peak only if all of it qualifies: strip qualification along equal neighbours
    while True:
        pad_k = np.ones((h + 2, w + 2), dtype=bool)
        pad_k[1:-1, 1:-1] = keep
        lost = np.zeros_like(keep)
        for (dy, dx), eq in zip(shifts, equal):
            lost |= eq & ~pad_k[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        lost &= keep
        if not lost.any():
            break
        keep &= ~lost
    # neighbouring survivors are equal-valued, so components are whole plateaus
    labels, _ = ndimage.label(keep, structure=_EIGHT)
    _, first = np.unique(labels.ravel(), return_index=True)
    first = first[labels.ravel()[first] > 0]
    return [(int(i % w), int(i // w)) for i in np.sort(first)]


def nms_radius(width: int) -> float:
    return max(1.0, NMS_RADIUS * width / REFERENCE_WIDTH)


def extract_fixations(m, radius: float | None = None, max_points: int = MAX_FIXATIONS,
                      min_points: int = MIN_FIXATIONS) -> FixationSet:
    """Peak locations of an attention map, 5-10 per non-degenerate map.

    Local maxima at or above a threshold (initially half the global maximum)
    are ranked by value (raster order on ties) and greedily kept unless they
    lie within ``radius`` of an already kept point. The threshold halves
    until ``min_points`` survive or no further maxima remain; at most
    ``max_points`` are returned.
    """
    m = _as_map(m)
    peak = m.max()
    if not peak > 0:
        raise ValueError("attention map has no positive value; no fixations to extract")
    h, w = m.shape
    r2 = (nms_radius(w) if radius is None else radius) ** 2
    maxima = local_maxima(m)
    maxima.sort(key=lambda p: (-m[p[1], p[0]], p[1], p[0]))
    lowest = m[maxima[-1][1], maxima[-1][0]]
    threshold = 0.5 * peak
    while True:
        kept: list[tuple[int, int]] = []
        for x, y in maxima:
            if m[y, x] < threshold:
                break
            if all((x - kx) ** 2 + (y - ky) ** 2 > r2 for kx, ky in kept):
                kept.append((x, y))
                if len(kept) == max_points:
                    break
        if len(kept) >= min_points or lowest >= threshold:
            return FixationSet(tuple(kept), w, h)
        threshold *= 0.5


# ------------------------------------------------------------------- metrics
def metric_kldiv(gt, pred, eps: float = KL_EPS) -> float:
    """KL divergence of the sum-normalised prediction from the ground truth (lower is better)."""
    gt, pred = _as_map(gt, "gt"), _as_map(pred, "pred")
    return float(kl_loss(Tensor(gt, dtype=np.float64), Tensor(pred, dtype=np.float64), eps).data)


def metric_cc(gt, pred) -> float:
    """Pearson correlation coefficient over pixels."""
    gt, pred = _as_map(gt, "gt"), _as_map(pred, "pred")
    return float(correlation(Tensor(gt, dtype=np.float64), Tensor(pred, dtype=np.float64)).data)


def metric_sim(gt, pred) -> float:
    """Histogram intersection of the two sum-normalised maps."""
    gt, pred = _as_map(gt, "gt"), _as_map(pred, "pred")
    if gt.shape != pred.shape:
        raise ValueError(f"maps differ in shape: {gt.shape} vs {pred.shape}")
    sg, sp = gt.sum(), pred.sum()
    if not (sg > 0 and sp > 0):
        raise ValueError("SIM needs maps with positive mass")
    return float(np.minimum(gt / sg, pred / sp).sum())


def _check_fix(fix: FixationSet, pred: np.ndarray) -> None:
    if len(fix) == 0:
        raise ValueError("empty fixation set")
    if (fix.height, fix.width) != pred.shape:
        raise ValueError(f"fixations are for a {fix.width}x{fix.height} map, prediction is {pred.shape}")


def metric_nss(fix: FixationSet, pred) -> float:
    """Mean z-scored prediction (population std) at fixation pixels; 0 for constant maps."""
    pred = _as_map(pred, "pred")
    _check_fix(fix, pred)
    std = pred.std()
    if std == 0:
        return 0.0
    z = (pred - pred.mean()) / std
    return float(np.mean([z[y, x] for x, y in fix.points]))


def roc_area(pos: np.ndarray, neg: np.ndarray) -> float:
    """Trapezoidal ROC area with thresholds at the distinct positive values.

    Curve points run from (0, 0) through ``(FP(t), TP(t))`` for each
    threshold in descending order to (1, 1).
    """
    pos = np.sort(np.asarray(pos, dtype=np.float64))
    neg = np.sort(np.asarray(neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValueError("ROC area needs at least one positive and one negative")
    thresholds = np.unique(pos)[::-1]
    tp = (pos.size - np.searchsorted(pos, thresholds, side="left")) / pos.size
    fp = (neg.size - np.searchsorted(neg, thresholds, side="left")) / neg.size
    xs = np.concatenate([[0.0], fp, [1.0]])
    ys = np.concatenate([[0.0], tp, [1.0]])
    # fsum is correctly rounded, so the area does not depend on summation order
    return math.fsum(((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0).tolist())


def metric_auc_judd(fix: FixationSet, pred) -> float:
    """ROC area with every non-fixated pixel as a negative."""
    pred = _as_map(pred, "pred")
    _check_fix(fix, pred)
    mask = fix.mask()
    return roc_area(pred[mask], pred[~mask])


def metric_auc_shuffled(fix: FixationSet, pred, negatives_pool: Sequence[FixationSet], splits: int = 100,
                        seed: int | Sequence[int] = 0) -> float:
    """ROC area against fixations borrowed from other videos, averaged over splits.

    Each split draws ``len(fix)`` negative locations from the pooled points
    (without replacement when the pool is large enough).
    """
    pred = _as_map(pred, "pred")
    _check_fix(fix, pred)
    pool = [p for fs in negatives_pool for p in fs.points]
    if not pool:
        raise ValueError("shuffled AUC needs a non-empty pool of negative fixations")
    for x, y in pool:
        if not (0 <= x < pred.shape[1] and 0 <= y < pred.shape[0]):
            raise ValueError(f"pooled fixation ({x}, {y}) outside the {pred.shape[1]}x{pred.shape[0]} map")
    pool_arr = np.asarray(pool)
    pos = np.array([pred[y, x] for x, y in fix.points])
    rng = np.random.default_rng(seed)
    k = len(fix)
    areas = []
    for _ in range(splits):
        idx = rng.choice(len(pool_arr), size=k, replace=len(pool_arr) < k)
        neg = pred[pool_arr[idx, 1], pool_arr[idx, 0]]
        areas.append(roc_area(pos, neg))
    return float(np.mean(areas))


METRIC_NAMES = ("kldiv", "nss", "sim", "cc", "auc_j", "auc_s")


def all_metrics(gt, pred, fix: FixationSet, negatives_pool: Sequence[FixationSet], seed: int | Sequence[int] = 0,
                splits: int = 100) -> dict[str, float]:
    """The six metrics of one frame; undefined values come back as NaN."""
    out = {}
    calls = {
        "kldiv": lambda: metric_kldiv(gt, pred),
        "nss": lambda: metric_nss(fix, pred),
        "sim": lambda: metric_sim(gt, pred),
        "cc": lambda: metric_cc(gt, pred),
        "auc_j": lambda: metric_auc_judd(fix, pred),
        "auc_s": lambda: metric_auc_shuffled(fix, pred, negatives_pool, splits, seed),
    }
    for name in METRIC_NAMES:
        try:
            out[name] = calls[name]()
        except ValueError:
            out[name] = float("nan")
    return out
