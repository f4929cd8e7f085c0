"""Accident annotations, video records, dataset splits and clip sampling.

On-disk layout of one video::

    <root>/<video_id>/frames/000000.ppm      RGB frames
    <root>/<video_id>/semantic/000000.pgm    class ids 0..18
    <root>/<video_id>/attention/000000.pgm   attention (FTA) maps, 0..255
    <root>/<video_id>/annotation.json
"""
from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm

NUM_CATEGORIES = 54
BEHAVIOR_TYPES = ("crossing", "hitting", "out_of_control", "other")
FIELD_ORDER = ("video_id", "category_id", "ego_involved", "num_frames", "fps", "aw_start", "aw_end",
               "behavior_type", "crash_boxes")
BOX_ORDER = ("frame", "x", "y", "w", "h")
FRAME_PATTERN = "{:06d}"


class AnnotationError(ValueError):
    """Raised with every violated field listed in ``problems``."""

    def __init__(self, problems: list[str]):
        super().__init__("invalid annotation: " + "; ".join(problems))
        self.problems = problems


@dataclass(frozen=True)
class CrashBox:
    frame: int
    x: int
    y: int
    w: int
    h: int

    def contains(self, col: int, row: int) -> bool:
        """Edge-inclusive hit test for pixel ``(col, row)``."""
        return self.x <= col <= self.x + self.w - 1 and self.y <= row <= self.y + self.h - 1


@dataclass(frozen=True)
class AccidentAnnotation:
    video_id: str
    category_id: int
    ego_involved: bool
    num_frames: int
    fps: int
    aw_start: int
    aw_end: int
    behavior_type: str
    crash_boxes: tuple[CrashBox, ...] = ()
    width: int | None = field(default=None, compare=False)
    height: int | None = field(default=None, compare=False)

    @property
    def before_aw(self) -> int:
        return self.aw_start

    @property
    def aw_length(self) -> int:
        return self.aw_end - self.aw_start + 1

    @property
    def after_aw(self) -> int:
        return self.num_frames - self.aw_end - 1

    def boxes_at(self, frame: int) -> list[CrashBox]:
        return [b for b in self.crash_boxes if b.frame == frame]

    def validate(self) -> None:
        problems = _problems(self)
        if problems:
            raise AnnotationError(problems)


def _problems(a: AccidentAnnotation) -> list[str]:
    p = []
    if not isinstance(a.video_id, str) or not a.video_id:
        p.append("video_id: must be a non-empty string")
    if not isinstance(a.category_id, int) or not 1 <= a.category_id <= NUM_CATEGORIES:
        p.append(f"category_id: {a.category_id!r} outside 1..{NUM_CATEGORIES}")
    if not isinstance(a.ego_involved, bool):
        p.append("ego_involved: must be true or false")
    if not isinstance(a.num_frames, int) or a.num_frames <= 0:
        p.append(f"num_frames: {a.num_frames!r} must be a positive integer")
    if not isinstance(a.fps, int) or a.fps <= 0:
        p.append(f"fps: {a.fps!r} must be a positive integer")
    if a.behavior_type not in BEHAVIOR_TYPES:
        p.append(f"behavior_type: {a.behavior_type!r} not one of {BEHAVIOR_TYPES}")
    n = a.num_frames if isinstance(a.num_frames, int) else 0
    if not isinstance(a.aw_start, int) or a.aw_start < 0:
        p.append(f"aw_start: {a.aw_start!r} must be a non-negative integer")
    if not isinstance(a.aw_end, int) or a.aw_end >= n:
        p.append(f"aw_end: {a.aw_end!r} must be below num_frames ({n})")
    elif isinstance(a.aw_start, int) and a.aw_end < a.aw_start:
        p.append(f"aw_end: {a.aw_end} precedes aw_start {a.aw_start}")
    for i, b in enumerate(a.crash_boxes):
        if not 0 <= b.frame < n:
            p.append(f"crash_boxes[{i}].frame: {b.frame} outside [0, {n})")
        if b.w <= 0 or b.h <= 0 or b.x < 0 or b.y < 0:
            p.append(f"crash_boxes[{i}]: box ({b.x},{b.y},{b.w},{b.h}) must have x,y >= 0 and w,h > 0")
        if a.width is not None and b.x + b.w > a.width:
            p.append(f"crash_boxes[{i}]: extends past frame width {a.width}")
        if a.height is not None and b.y + b.h > a.height:
            p.append(f"crash_boxes[{i}]: extends past frame height {a.height}")
    return p


def parse_annotation(raw: bytes | str, width: int | None = None, height: int | None = None
                     ) -> AccidentAnnotation:
    """Decode and validate one annotation JSON document."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise AnnotationError([f"not UTF-8: {exc}"]) from None
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise AnnotationError([f"malformed JSON: {exc}"]) from None
    if not isinstance(obj, dict):
        raise AnnotationError(["top level must be a JSON object"])
    problems = [f"{k}: missing" for k in FIELD_ORDER if k not in obj]
    problems += [f"{k}: unknown field" for k in obj if k not in FIELD_ORDER]
    if problems:
        raise AnnotationError(problems)
    boxes = []
    for i, b in enumerate(obj["crash_boxes"] if isinstance(obj["crash_boxes"], list) else [None]):
        if not isinstance(b, dict) or set(b) != set(BOX_ORDER) or not all(
                type(b[k]) is int for k in BOX_ORDER):
            problems.append(f"crash_boxes[{i}]: needs integer fields {BOX_ORDER}")
            continue
        boxes.append(CrashBox(**{k: b[k] for k in BOX_ORDER}))
    for key in ("category_id", "num_frames", "fps", "aw_start", "aw_end"):
        if type(obj[key]) is not int:
            problems.append(f"{key}: must be an integer, got {obj[key]!r}")
    if problems:
        raise AnnotationError(problems)
    ann = AccidentAnnotation(
        video_id=obj["video_id"], category_id=obj["category_id"], ego_involved=obj["ego_involved"],
        num_frames=obj["num_frames"], fps=obj["fps"], aw_start=obj["aw_start"], aw_end=obj["aw_end"],
        behavior_type=obj["behavior_type"], crash_boxes=tuple(boxes), width=width, height=height,
    )
    ann.validate()
    return ann


def serialize_annotation(a: AccidentAnnotation) -> bytes:
    """Canonical compact JSON in schema key order."""
    obj = {k: getattr(a, k) for k in FIELD_ORDER if k != "crash_boxes"}
    obj["crash_boxes"] = [{k: getattr(b, k) for k in BOX_ORDER} for b in a.crash_boxes]
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


# --------------------------------------------------------------- video records
@dataclass
class VideoRecord:
    annotation: AccidentAnnotation
    frame_paths: list[Path]
    semantic_paths: list[Path]
    attention_paths: list[Path]
    resolution: tuple[int, int]

    @property
    def video_id(self) -> str:
        return self.annotation.video_id

    @property
    def num_frames(self) -> int:
        return self.annotation.num_frames


def video_paths(root, video_id: str, num_frames: int) -> tuple[list[Path], list[Path], list[Path]]:
    base = Path(root) / video_id
    names = [FRAME_PATTERN.format(i) for i in range(num_frames)]
    return ([base / "frames" / f"{n}.ppm" for n in names],
            [base / "semantic" / f"{n}.pgm" for n in names],
            [base / "attention" / f"{n}.pgm" for n in names])


def load_annotation(path) -> AccidentAnnotation:
    return parse_annotation(Path(path).read_bytes())


def load_video(root, video_id: str) -> VideoRecord:
    ann = load_annotation(Path(root) / video_id / "annotation.json")
    frames, sem, att = video_paths(root, video_id, ann.num_frames)
    for seq, kind in ((frames, "frame"), (sem, "semantic map"), (att, "attention map")):
        missing = [p for p in seq if not p.exists()]
        if missing:
            raise FileNotFoundError(f"{video_id}: {len(missing)} {kind} file(s) missing, first {missing[0]}")
    first = netpbm.read(att[0])
    res = first.shape[:2]
    ann = AccidentAnnotation(**{**ann.__dict__, "width": res[1], "height": res[0]})
    ann.validate()
    return VideoRecord(ann, frames, sem, att, res)


def list_videos(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory {root} does not exist")
    return sorted(p.name for p in root.iterdir() if (p / "annotation.json").is_file())


def load_catalog(root) -> list[VideoRecord]:
    return [load_video(root, vid) for vid in list_videos(root)]


def load_annotations(source) -> list[AccidentAnnotation]:
    """Annotations of a dataset directory, or of a JSON-lines file (one record per line)."""
    source = Path(source)
    if source.is_file():
        lines = [ln for ln in source.read_bytes().splitlines() if ln.strip()]
        return [parse_annotation(ln) for ln in lines]
    return [load_annotation(source / vid / "annotation.json") for vid in list_videos(source)]


# ---------------------------------------------------------------------- splits
@dataclass(frozen=True)
class SplitCatalog:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.val), len(self.test)


def split_counts(n: int) -> tuple[int, int, int]:
    """Per-category 3:1:1 allocation; at least one video always goes to test."""
    if n <= 0:
        raise ValueError("category with no videos")
    if n == 1:
        return 0, 0, 1
    train = int(np.floor(0.6 * n + 0.5))
    val = int(np.floor(0.2 * n + 0.5))
    test = n - train - val
    if test < 1:
        train -= 1 - test
        test = 1
    return train, val, test


def make_splits(catalog: Mapping[str, int] | Iterable[AccidentAnnotation], seed: int) -> SplitCatalog:
    """Category-stratified 3:1:1 split; single-video categories go to test.

    ``catalog`` maps video id to category id (or is a sequence of
    annotations). Within each category the videos are shuffled by a
    generator seeded with ``seed``; the result is sorted per split.
    """
    if isinstance(catalog, Mapping):
        items = dict(catalog)
    else:
        items = {a.video_id: a.category_id for a in catalog}
    if not items:
        raise ValueError("cannot split an empty catalog")
    by_cat: dict[int, list[str]] = defaultdict(list)
    for vid, cat in items.items():
        by_cat[cat].append(vid)
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    for cat in sorted(by_cat):
        vids = sorted(by_cat[cat])
        order = [vids[i] for i in rng.permutation(len(vids))]
        n_tr, n_va, _ = split_counts(len(vids))
        train += order[:n_tr]
        val += order[n_tr:n_tr + n_va]
        test += order[n_tr + n_va:]
    return SplitCatalog(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)))


# ---------------------------------------------------------------- clip sampling
@dataclass
class ClipSample:
    """``T`` consecutive frames, their semantic maps and the last frame's label."""

    rgb: np.ndarray        # [3, T, H, W] in [0, 1]
    semantic: np.ndarray   # [1, T, H, W] in [0, 1]
    label: np.ndarray      # [H, W] in [0, 1]
    video_id: str = ""
    frame: int = -1
    frame_indices: tuple[int, ...] = ()
    label_path: str = ""


def clip_indices(target: int, length: int) -> list[int]:
    """Frames ``target-T+1 .. target``, front-padded with frame 0."""
    return [max(0, i) for i in range(target - length + 1, target + 1)]


def sample_clip(video: VideoRecord, target_frame: int, length: int = 5) -> ClipSample:
    if not 0 <= target_frame < video.num_frames:
        raise IndexError(f"{video.video_id}: target frame {target_frame} outside [0, {video.num_frames})")
    if length < 1:
        raise ValueError("clip length must be at least 1")
    idx = clip_indices(target_frame, length)
    rgb = np.stack([netpbm.load_frame(video.frame_paths[i]) for i in idx], axis=1)
    sem = np.stack([netpbm.load_map(video.semantic_paths[i], "semantic") for i in idx])[None]
    label = netpbm.load_map(video.attention_paths[target_frame], "fta")
    return ClipSample(rgb, sem, label, video.video_id, target_frame, tuple(idx),
                      str(video.attention_paths[target_frame]))


class ClipDataset(Sequence):
    """Every (video, frame) pair of a catalog as a lazily loaded clip."""

    def __init__(self, videos: Sequence[VideoRecord], length: int = 5):
        self.videos = list(videos)
        self.length = length
        self.index = [(v, t) for v, rec in enumerate(self.videos) for t in range(rec.num_frames)]

    def __len__(self) -> int:
        return len(self.index)

    def __getitem__(self, i: int) -> ClipSample:
        v, t = self.index[i]
        return sample_clip(self.videos[v], t, self.length)

    @property
    def num_frames(self) -> int:
        return len(self.index)
