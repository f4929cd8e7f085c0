"""Regenerate the committed fixture files (deterministic).

    python3 tests/fixtures/build_fixtures.py

* ``window_annotations.jsonl``: 2000 annotations whose before-window,
  window and after-window lengths sum to 315154 / 131679 / 211643 frames.
* ``split_hist_1000.csv`` / ``split_hist_1018.csv``: per-category video
  counts (54 categories) for the split tests.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from msafnet.data import BEHAVIOR_TYPES, AccidentAnnotation, serialize_annotation, split_counts

HERE = Path(__file__).parent
VIDEOS = 2000
BEFORE, WINDOW, AFTER = 315154, 131679, 211643


def spread(total: int, n: int, minimum: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` non-negative integers >= ``minimum`` summing to ``total``, long-tailed."""
    weights = rng.gamma(2.0, 1.0, size=n)
    return minimum + rng.multinomial(total - minimum * n, weights / weights.sum())


def window_annotations() -> list[AccidentAnnotation]:
    rng = np.random.default_rng(20190528)
    before = spread(BEFORE, VIDEOS, 0, rng)
    window = spread(WINDOW, VIDEOS, 1, rng)
    after = spread(AFTER, VIDEOS, 0, rng)
    anns = []
    for i in range(VIDEOS):
        b, w, a = int(before[i]), int(window[i]), int(after[i])
        anns.append(AccidentAnnotation(
            video_id=f"t3_{i:04d}", category_id=1 + i % 54, ego_involved=i % 3 != 0, num_frames=b + w + a,
            fps=30, aw_start=b, aw_end=b + w - 1, behavior_type=BEHAVIOR_TYPES[i % 4], crash_boxes=()))
    return anns


def split_sizes(hist) -> tuple[int, int, int]:
    return tuple(int(s) for s in np.sum([split_counts(n) for n in hist], axis=0))


def search_histogram(total: int, target: tuple[int, int, int] | None, singles: int, seed: int) -> list[int]:
    """Long-tailed 54-category histogram with ``singles`` one-video categories.

    With a ``target`` the multi-video counts are perturbed (sum preserved)
    until the split sizes match it.
    """
    rng = np.random.default_rng(seed)
    multi = 54 - singles
    hist = np.concatenate([np.ones(singles, dtype=int), 2 + spread(total - singles - 2 * multi, multi, 0, rng)])
    if target is None:
        return sorted(hist.tolist(), reverse=True)
    for _ in range(200000):
        if split_sizes(hist) == target:
            return sorted(hist.tolist(), reverse=True)
        i, j = rng.integers(singles, 54, size=2)
        if i != j and hist[i] > 2:
            hist[i] -= 1
            hist[j] += 1
    raise RuntimeError("no histogram found")


def write_hist(path: Path, hist: list[int]) -> None:
    lines = ["category_id,videos"] + [f"{c},{n}" for c, n in enumerate(hist, 1)]
    path.write_text("\n".join(lines) + "\n")


def main() -> None:
    lines = [serialize_annotation(a).decode() for a in window_annotations()]
    (HERE / "window_annotations.jsonl").write_text("\n".join(lines) + "\n")
    write_hist(HERE / "split_hist_1000.csv", search_histogram(1000, None, singles=6, seed=1000))
    write_hist(HERE / "split_hist_1018.csv", search_histogram(1018, (598, 198, 222), singles=6, seed=1018))


if __name__ == "__main__":
    main()
