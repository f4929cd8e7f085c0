"""Batch entry points: ``msafnet {synth,train,predict,eval,adf,stats}``.

Settings come from built-in defaults, then an optional ``key=value`` config
file (``#`` starts a comment), then command-line flags. Every command that
takes ``--out`` writes its resolved settings to ``config.txt`` and a
``MANIFEST`` of SHA-256 hashes of everything it wrote.

Exit codes: 0 success, 1 computational failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import netpbm
from .analysis import average_attention_map, compute_adf, summarize_adf, temporal_stats
from .checkpoint import CheckpointError, load_model, save_model
from .data import AnnotationError, ClipDataset, load_annotations, load_catalog, load_video, sample_clip
from .evaluation import evaluate_run, pred_path
from .model import ModelConfig, MSAFNetModel
from .synth import SynthConfig, synth_generate
from .tensor import Tensor, no_grad
from .train import TrainConfig, predict_batch, train

MODE_NAMES = {"vision": "vision_only", "early": "early", "late": "late"}
OVERLAY_ALPHA = 0.5


class UsageError(Exception):
    """Bad flags, config values or inputs; maps to exit code 2."""


# ------------------------------------------------------------------ config
DEFAULTS: dict[str, dict[str, object]] = {
    "synth": {f.name: f.default for f in fields(SynthConfig)},
    "train": {"data": "", "mode": "late", "resolution": 64, "steps": 0, "epochs": 3, "batch_clips": 12,
              "clip_len": 5, "learning_rate": 1e-4, "seed": 0},
    "predict": {"checkpoint": "", "data": "", "clip_len": 5, "batch": 4, "overlays": False},
    "eval": {"pred": "", "gt": "", "ann": "", "seed": 0, "splits": 100},
    "adf": {"maps": "", "ann": "", "source": "human_gt"},
    "stats": {"ann_dir": ""},
}


def _coerce(key: str, raw: str, default):
    try:
        if isinstance(default, bool):
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            return tuple(s.strip() for s in raw.split(",") if s.strip())
        return type(default)(raw)
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot read {raw!r} as {type(default).__name__}") from None


def parse_config_text(text: str, defaults: dict) -> dict:
    """``key=value`` lines onto ``defaults``; unknown keys are errors."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key=value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in defaults:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = _coerce(key, val, defaults[key])
    return out


def format_config(cfg: dict) -> str:
    def show(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ",".join(v)
        return repr(v) if isinstance(v, float) else str(v)
    return "".join(f"{k}={show(v)}\n" for k, v in cfg.items())


def resolve(command: str, args: argparse.Namespace) -> dict:
    defaults = DEFAULTS[command]
    cfg = dict(defaults)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        cfg.update(parse_config_text(path.read_text(), defaults))
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = _coerce(key, str(val), defaults[key]) if isinstance(val, str) else val
    return cfg


def write_manifest(out: Path) -> Path:
    lines = []
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "MANIFEST":
            digest = hashlib.sha256(p.read_bytes()).hexdigest()
            lines.append(f"{digest}  {p.relative_to(out).as_posix()}\n")
    manifest = out / "MANIFEST"
    manifest.write_text("".join(lines))
    return manifest


def _require(cfg: dict, *keys: str) -> None:
    for k in keys:
        if not cfg[k]:
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{what} directory {p} does not exist")
    return p


# --------------------------------------------------------------- overlays
def heat_colors(values: np.ndarray) -> np.ndarray:
    """Fixed blue-cyan-yellow-red ramp for values in [0, 1]; returns [..., 3] in [0, 1]."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)[..., None]
    centres = np.array([0.75, 0.5, 0.25])
    return np.clip(1.5 - np.abs(4.0 * (v - centres)), 0.0, 1.0)


def overlay(frame_rgb: np.ndarray, attention: np.ndarray, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Blend a heat-coloured map over an ``[H, W, 3]`` frame in [0, 1]; returns uint8."""
    mixed = (1.0 - alpha) * frame_rgb + alpha * heat_colors(attention)
    return netpbm.to_uint8(mixed)


# ---------------------------------------------------------------- commands
def cmd_synth(cfg: dict, out: Path) -> int:
    try:
        sc = SynthConfig(**cfg)
        sc.validate()
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    records = synth_generate(sc, out)
    frames = sum(r.num_frames for r in records)
    behaviors = sorted({r.annotation.behavior_type for r in records})
    print(f"videos={len(records)} frames={frames} resolution={sc.resolution} behaviors={','.join(behaviors)}")
    return 0


def cmd_train(cfg: dict, out: Path) -> int:
    _require(cfg, "data")
    if cfg["mode"] not in MODE_NAMES:
        raise UsageError(f"--mode must be one of {sorted(MODE_NAMES)}, got {cfg['mode']!r}")
    if cfg["resolution"] not in (64, 256):
        raise UsageError(f"--resolution must be 64 or 256, got {cfg['resolution']}")
    videos = load_catalog(_dir(cfg["data"], "data"))
    if not videos:
        raise UsageError(f"no videos under {cfg['data']}")
    res = cfg["resolution"]
    for v in videos:
        if v.resolution != (res, res):
            raise UsageError(f"{v.video_id}: frames are {v.resolution}, training expects {res}x{res}")
    mode = MODE_NAMES[cfg["mode"]]
    maker = ModelConfig.compact if res == 64 else ModelConfig.full
    model = MSAFNetModel(maker(mode, res, seed=cfg["seed"]))
    try:
        tc = TrainConfig(learning_rate=cfg["learning_rate"], batch_clips=cfg["batch_clips"],
                         clip_len=cfg["clip_len"], epochs=cfg["epochs"], seed=cfg["seed"], resolution=res)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    dataset = ClipDataset(videos, tc.clip_len)
    result = train(model, dataset, tc, steps=cfg["steps"] or None,
                   callback=lambda row: print("step={} loss={:.6f} kl={:.6f} cc={:.6f}".format(*row)))
    save_model(out / "model.ckpt", model)
    (out / "loss.csv").write_text("\n".join(result.csv_lines()) + "\n")
    if not np.isfinite(result.trace[-1][1]):
        print("training diverged: final loss is not finite", file=sys.stderr)
        return 1
    return 0


def cmd_predict(cfg: dict, out: Path) -> int:
    _require(cfg, "checkpoint", "data")
    if not Path(cfg["checkpoint"]).is_file():
        raise UsageError(f"checkpoint {cfg['checkpoint']} not found")
    try:
        model = load_model(cfg["checkpoint"])
    except CheckpointError as exc:
        raise UsageError(f"unreadable checkpoint: {exc}") from None
    model.eval()
    videos = load_catalog(_dir(cfg["data"], "data"))
    if not videos:
        raise UsageError(f"no videos under {cfg['data']}")
    written = 0
    with no_grad():
        for v in videos:
            (out / v.video_id / "attention").mkdir(parents=True, exist_ok=True)
            if cfg["overlays"]:
                (out / v.video_id / "overlay").mkdir(parents=True, exist_ok=True)
            for start in range(0, v.num_frames, cfg["batch"]):
                clips = [sample_clip(v, t, cfg["clip_len"]) for t in range(start, min(v.num_frames, start + cfg["batch"]))]
                rgb = Tensor._wrap(np.stack([c.rgb for c in clips]).astype(model.dtype))
                sem = Tensor._wrap(np.stack([c.semantic for c in clips]).astype(model.dtype))
                pred = predict_batch(model, rgb, sem).data[:, 0]
                for c, p in zip(clips, pred):
                    netpbm.write(pred_path(out, v.video_id, c.frame), netpbm.to_uint8(p))
                    if cfg["overlays"]:
                        frame = netpbm.load_frame(v.frame_paths[c.frame]).transpose(1, 2, 0)
                        netpbm.write(out / v.video_id / "overlay" / f"{c.frame:06d}.ppm", overlay(frame, p))
                    written += 1
    print(f"videos={len(videos)} maps={written}")
    return 0


def cmd_eval(cfg: dict, out: Path) -> int:
    _require(cfg, "pred", "gt")
    pred_dir, gt_dir = _dir(cfg["pred"], "prediction"), _dir(cfg["gt"], "ground-truth")
    anns = load_annotations(cfg["ann"] or gt_dir)
    if not anns:
        raise UsageError("no annotations found")
    report = evaluate_run(pred_dir, gt_dir, anns, seed=cfg["seed"], splits=cfg["splits"])
    (out / "metrics.csv").write_text("\n".join(report.csv_lines()) + "\n")
    (out / "videos.csv").write_text("\n".join(report.video_csv_lines()) + "\n")
    summary = "\n".join(report.summary_lines()) + "\n"
    (out / "summary.txt").write_text(summary)
    sys.stdout.write(summary)
    return 0


def cmd_adf(cfg: dict, out: Path) -> int:
    _require(cfg, "maps")
    maps_dir = _dir(cfg["maps"], "maps")
    anns = load_annotations(cfg["ann"] or maps_dir)
    if not anns:
        raise UsageError("no annotations found")
    records, excluded = [], []
    for a in anns:
        if not a.crash_boxes:
            excluded.append(a.video_id)
            continue
        maps = [netpbm.load_map(pred_path(maps_dir, a.video_id, t), "fta") for t in range(a.num_frames)]
        records.append(compute_adf(maps, a, cfg["source"]))
    lines = ["video_id,category_id,source,first_hit_frame,adf"]
    for r in records:
        hit = "" if r.first_hit_frame is None else str(r.first_hit_frame)
        adf = "" if r.adf is None else str(r.adf)
        lines.append(f"{r.video_id},{r.category_id},{r.source},{hit},{adf}")
    (out / "adf_records.csv").write_text("\n".join(lines) + "\n")
    summary = summarize_adf(records).csv_lines()
    (out / "adf_summary.csv").write_text("\n".join(summary) + "\n")
    for behavior in sorted({a.behavior_type for a in anns}):
        vids = [load_video(maps_dir, a.video_id) for a in anns if a.behavior_type == behavior]
        netpbm.write(out / f"average_{behavior}.pgm", netpbm.to_uint8(average_attention_map(vids, behavior)))
    print("\n".join(summary))
    print(f"excluded_no_boxes={len(excluded)}")
    return 0


def cmd_stats(cfg: dict, out: Path | None) -> int:
    _require(cfg, "ann_dir")
    src = Path(cfg["ann_dir"])
    if not src.exists():
        raise UsageError(f"{src} does not exist")
    anns = load_annotations(src)
    if not anns:
        raise UsageError(f"no annotations under {src}")
    table = "\n".join(temporal_stats(anns).table_lines()) + "\n"
    if out is not None:
        (out / "temporal_stats.csv").write_text(table)
    sys.stdout.write(table)
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "predict": cmd_predict, "eval": cmd_eval,
            "adf": cmd_adf, "stats": cmd_stats}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msafnet", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True):
        p.add_argument("--config", help="key=value settings file")
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="cap on numeric worker threads")
        return p

    p = common(sub.add_parser("synth", help="generate a synthetic accident dataset"))
    p.add_argument("--seed", type=int)
    p.add_argument("--num-videos", dest="num_videos", type=int)
    p.add_argument("--num-frames", dest="num_frames", type=int)
    p.add_argument("--resolution", type=int)
    p.add_argument("--aw-start", dest="aw_start", type=int)
    p.add_argument("--attention-delay", dest="attention_delay", type=int)

    p = common(sub.add_parser("train", help="train a model and write a checkpoint"))
    p.add_argument("--data")
    p.add_argument("--mode", choices=sorted(MODE_NAMES))
    p.add_argument("--resolution", type=int, choices=(64, 256))
    p.add_argument("--steps", type=int, help="optimiser steps (0: derive from epochs)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-clips", dest="batch_clips", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--seed", type=int)

    p = common(sub.add_parser("predict", help="write predicted attention maps"))
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--batch", type=int)
    p.add_argument("--overlays", action="store_true", default=None, help="also write P6 heatmap overlays")

    p = common(sub.add_parser("eval", help="score predictions against ground truth"))
    p.add_argument("--pred")
    p.add_argument("--gt")
    p.add_argument("--ann", help="annotation directory or JSON-lines file (default: --gt)")
    p.add_argument("--seed", type=int)
    p.add_argument("--splits", type=int)

    p = common(sub.add_parser("adf", help="attention delay analysis"))
    p.add_argument("--maps")
    p.add_argument("--ann")
    p.add_argument("--source", choices=("human_gt", "model"))

    p = common(sub.add_parser("stats", help="accident-window frame statistics"), out_required=False)
    p.add_argument("--ann-dir", dest="ann_dir")
    return parser


def _thread_limit(n: int | None):
    if n is None:
        return contextlib.nullcontext()
    if n < 1:
        raise UsageError("--threads must be at least 1")
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return contextlib.nullcontext()
    return threadpool_limits(n)


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve(args.command, args)
        out = Path(args.out) if args.out else None
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "config.txt").write_text(format_config(cfg))
        with _thread_limit(args.threads):
            code = COMMANDS[args.command](cfg, out)
        if out is not None:
            write_manifest(out)
        return code
    except (UsageError, AnnotationError, FileNotFoundError, NotADirectoryError) as exc:
        print(f"msafnet {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any other failure is computational
        print(f"msafnet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())
