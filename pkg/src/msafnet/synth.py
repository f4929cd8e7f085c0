"""Deterministic synthetic accident scenarios.

Each video shows a static distractor in the upper part of the frame and a
rectangular crash object that enters through a frame edge at constant
velocity. The attention map is a Gaussian on the distractor until
``aw_start + attention_delay``, then on the visible part of the object, so
the attention delay of the ground truth is known exactly.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import netpbm
from .data import (
    AccidentAnnotation,
    CrashBox,
    VideoRecord,
    serialize_annotation,
    video_paths,
)

CLASS_ROAD = 0
CLASS_SKY = 10
CLASS_PERSON = 11
CLASS_CAR = 13
OBJECT_RGB = (200, 30, 30)
DISTRACTOR_RGB = (230, 210, 40)


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_videos: int = 12
    num_frames: int = 40
    resolution: int = 64
    object_speed: int = 2
    object_width: int = 12
    object_height: int = 8
    distractor_size: int = 6
    aw_start: int = 10
    attention_delay: int = 3
    sigma: float = 4.0
    noise: float = 0.02
    behaviors: tuple[str, ...] = ("crossing", "hitting")

    def problems(self) -> list[str]:
        p = []
        for name in ("num_videos", "num_frames", "resolution", "object_speed", "object_width",
                     "object_height", "distractor_size"):
            if getattr(self, name) <= 0:
                p.append(f"{name} must be positive")
        if self.resolution % 8:
            p.append("resolution must be a multiple of 8")
        if self.object_width % 2 or self.object_height % 2:
            p.append("object_width and object_height must be even")
        if not self.sigma > 0:
            p.append("sigma must be positive")
        if self.noise < 0:
            p.append("noise must be non-negative")
        if self.aw_start < 0:
            p.append("aw_start must be non-negative")
        if self.attention_delay < 0:
            p.append("attention_delay must be non-negative")
        if self.aw_start + self.attention_delay >= self.num_frames:
            p.append("aw_start + attention_delay must be below num_frames")
        bad = [b for b in self.behaviors if b not in ("crossing", "hitting")]
        if bad or not self.behaviors:
            p.append(f"behaviors must be drawn from ('crossing', 'hitting'), got {self.behaviors}")
        return p

    def validate(self) -> None:
        p = self.problems()
        if p:
            raise ValueError("invalid synth config: " + "; ".join(p))

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Per-frame top-left corner of the (unclipped) object box."""

    x: np.ndarray
    y: np.ndarray
    width: int
    height: int

    def visible_box(self, t: int, res: int) -> tuple[int, int, int, int] | None:
        x0, y0 = int(self.x[t]), int(self.y[t])
        x1, y1 = min(res, x0 + self.width), min(res, y0 + self.height)
        x0, y0 = max(0, x0), max(0, y0)
        if x1 <= x0 or y1 <= y0:
            return None
        return x0, y0, x1 - x0, y1 - y0

    def visible_fraction(self, t: int, res: int) -> float:
        box = self.visible_box(t, res)
        if box is None:
            return 0.0
        return box[2] * box[3] / (self.width * self.height)


def first_half_visible(traj: Trajectory, res: int) -> int | None:
    """First frame where at least half of the object lies inside the view."""
    for t in range(len(traj.x)):
        if traj.visible_fraction(t, res) >= 0.5:
            return t
    return None


def last_half_visible(traj: Trajectory, res: int, start: int) -> int:
    t = start
    while t + 1 < len(traj.x) and traj.visible_fraction(t + 1, res) >= 0.5:
        t += 1
    return t


def make_trajectory(cfg: SynthConfig, behavior: str, rng: np.random.Generator) -> Trajectory:
    """Constant-velocity path that is exactly half visible at ``cfg.aw_start``."""
    r, w, h, v = cfg.resolution, cfg.object_width, cfg.object_height, cfg.object_speed
    steps = np.arange(cfg.num_frames) - cfg.aw_start
    if behavior == "crossing":
        row = int(rng.integers(int(0.55 * r), r - h - 1))
        if rng.random() < 0.5:
            x = -w // 2 + v * steps
        else:
            x = r - w // 2 - v * steps
        y = np.full(cfg.num_frames, row)
    else:
        col = r // 2 - w // 2 + int(rng.integers(-2, 3))
        x = np.full(cfg.num_frames, col)
        y = r - h // 2 - v * steps
    return Trajectory(np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64), w, h)


def gaussian_map(res: int, cx: float, cy: float, sigma: float) -> np.ndarray:
    ys, xs = np.mgrid[0:res, 0:res].astype(np.float64)
    return np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))


def _background(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    r = cfg.resolution
    ramp = np.linspace(0.0, 1.0, r)[:, None, None]
    sky = np.array([0.55, 0.70, 0.90])
    road = np.array([0.35, 0.35, 0.38])
    base = (1 - ramp) * sky + ramp * road
    base = np.broadcast_to(base, (r, r, 3))
    return base + rng.normal(0.0, cfg.noise, size=(r, r, 3))


def _semantic_background(r: int) -> np.ndarray:
    sem = np.full((r, r), CLASS_ROAD, dtype=np.uint8)
    sem[: int(0.4 * r)] = CLASS_SKY
    return sem


def render_video(cfg: SynthConfig, index: int, rng: np.random.Generator):
    """Frames, semantic maps, attention maps and the annotation of one video."""
    r = cfg.resolution
    behavior = cfg.behaviors[index % len(cfg.behaviors)]
    traj = make_trajectory(cfg, behavior, rng)
    aw_start = first_half_visible(traj, r)
    if aw_start != cfg.aw_start:
        raise ValueError(f"trajectory is first half-visible at {aw_start}, expected {cfg.aw_start}")
    aw_end = last_half_visible(traj, r, aw_start)
    lock_on = cfg.aw_start + cfg.attention_delay

    ds = cfg.distractor_size
    if behavior == "crossing":
        dcx = float(rng.integers(int(0.15 * r), int(0.85 * r)))
    else:
        dcx = r / 2 + float(rng.integers(-2, 3))
    dcy = 0.2 * r
    dx0, dy0 = int(dcx) - ds // 2, int(dcy) - ds // 2

    frames, sems, maps, boxes = [], [], [], []
    for t in range(cfg.num_frames):
        img = _background(cfg, rng)
        sem = _semantic_background(r)
        img[dy0:dy0 + ds, dx0:dx0 + ds] = np.array(DISTRACTOR_RGB) / 255.0
        sem[dy0:dy0 + ds, dx0:dx0 + ds] = CLASS_PERSON
        vis = traj.visible_box(t, r)
        if vis is not None:
            x, y, w, h = vis
            img[y:y + h, x:x + w] = np.array(OBJECT_RGB) / 255.0
            sem[y:y + h, x:x + w] = CLASS_CAR
            boxes.append(CrashBox(t, x, y, w, h))
            if t < lock_on and x <= dcx <= x + w - 1 and y <= dcy <= y + h - 1:
                raise ValueError(f"video {index}: object covers the distractor before attention lock-on")
        if t >= lock_on and vis is not None:
            x, y, w, h = vis
            att = gaussian_map(r, x + (w - 1) / 2.0, y + (h - 1) / 2.0, cfg.sigma)
        else:
            if t == lock_on:
                raise ValueError(f"video {index}: object not visible at lock-on frame {t}")
            att = gaussian_map(r, dcx, dcy, cfg.sigma)
        frames.append(netpbm.to_uint8(np.clip(img, 0.0, 1.0)))
        sems.append(sem)
        maps.append(netpbm.to_uint8(att))

    ann = AccidentAnnotation(
        video_id=f"synth_{index:03d}",
        category_id=1 + (index * 7) % 54,
        ego_involved=behavior == "hitting",
        num_frames=cfg.num_frames,
        fps=30,
        aw_start=aw_start,
        aw_end=aw_end,
        behavior_type=behavior,
        crash_boxes=tuple(boxes),
        width=r,
        height=r,
    )
    ann.validate()
    return frames, sems, maps, ann


def synth_generate(cfg: SynthConfig, out_dir) -> list[VideoRecord]:
    """Write ``cfg.num_videos`` videos under ``out_dir`` and return their records."""
    cfg.validate()
    out = Path(out_dir)
    records = []
    for i in range(cfg.num_videos):
        rng = np.random.default_rng([cfg.seed, i])
        frames, sems, maps, ann = render_video(cfg, i, rng)
        fpaths, spaths, apaths = video_paths(out, ann.video_id, cfg.num_frames)
        for sub in ("frames", "semantic", "attention"):
            (out / ann.video_id / sub).mkdir(parents=True, exist_ok=True)
        for t in range(cfg.num_frames):
            netpbm.write(fpaths[t], frames[t])
            netpbm.write(spaths[t], sems[t])
            netpbm.write(apaths[t], maps[t])
        (out / ann.video_id / "annotation.json").write_bytes(serialize_annotation(ann))
        records.append(VideoRecord(ann, fpaths, spaths, apaths, (cfg.resolution, cfg.resolution)))
    return records
