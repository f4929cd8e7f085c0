"""Binary checkpoint container.

Layout (little-endian)::

    b"MSAF" | u32 version | u32 entry count
    per entry: u32 name length | name (utf-8) | u32 dtype code | u32 rank |
               u32 extent * rank | raw values

dtype code 0 is float32, 1 is float64.
"""
from __future__ import annotations

import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

MAGIC = b"MSAF"
VERSION = 1
DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_OF = {np.dtype("float32"): 0, np.dtype("float64"): 1}


class CheckpointError(ValueError):
    pass


def encode(entries: Mapping[str, np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(entries))]
    for name, arr in entries.items():
        arr = np.asarray(arr)
        code = _CODE_OF.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"entry {name!r}: unsupported dtype {arr.dtype}")
        raw = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw)))
        out.append(raw)
        out.append(struct.pack("<II", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes())
    return b"".join(out)


def decode(buf: bytes) -> dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes for {what} at offset {pos}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic at offset 0")
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    entries: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name = take(nlen, "name").decode("utf-8")
        code, rank = struct.unpack("<II", take(8, f"{name!r} dtype/rank"))
        if code not in DTYPE_CODES:
            raise CheckpointError(f"entry {name!r}: unknown dtype code {code} at offset {pos - 8}")
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"{name!r} extents"))
        dt = DTYPE_CODES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        data = np.frombuffer(take(nbytes, f"{name!r} values"), dtype=dt).reshape(shape)
        entries[name] = data.astype(dt.newbyteorder("="), copy=True)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes after last entry at offset {pos}")
    return entries


def save(path, entries: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode(entries))


def load(path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


# ------------------------------------------------------------ model state
_MODE_CODES = {"vision_only": 0, "early": 1, "late": 2}


def model_state(model) -> dict[str, np.ndarray]:
    """Parameters, running statistics and the architecture as ``meta.*`` entries."""
    cfg = model.config
    state: dict[str, np.ndarray] = {
        "meta.fusion_mode": np.array([_MODE_CODES[cfg.fusion_mode]], dtype=np.float32),
        "meta.resolution": np.array([cfg.resolution], dtype=np.float32),
        "meta.channels": np.array(cfg.channels, dtype=np.float32),
        "meta.semantic_channels": np.array(cfg.sem_channels, dtype=np.float32),
        "meta.hidden": np.array([cfg.hidden], dtype=np.float32),
        "meta.decoder": np.array(cfg.decoder, dtype=np.float32),
    }
    for name, p in model.named_parameters():
        state[name] = p.data
    for name, buf in model.named_buffers():
        state[name] = buf
    return state


def save_model(path, model) -> None:
    save(path, model_state(model))


def load_model(path):
    """Rebuild a model from a checkpoint written by :func:`save_model`."""
    from .model import FUSION_MODES, ModelConfig, MSAFNetModel

    entries = load(path)
    try:
        mode = FUSION_MODES[int(entries["meta.fusion_mode"][0])]
        ints = lambda key: tuple(int(v) for v in entries[key])  # noqa: E731
        params = [v for k, v in entries.items() if not k.startswith("meta.")]
        dtype = "float64" if params and params[0].dtype == np.float64 else "float32"
        cfg = ModelConfig(
            fusion_mode=mode,
            resolution=ints("meta.resolution")[0],
            channels=ints("meta.channels"),
            semantic_channels=ints("meta.semantic_channels"),
            hidden=ints("meta.hidden")[0],
            decoder=ints("meta.decoder"),
            dtype=dtype,
        )
    except KeyError as exc:
        raise CheckpointError(f"checkpoint lacks architecture entry {exc}") from None
    model = MSAFNetModel(cfg)
    load_state(model, entries)
    return model


def load_state(model, entries: Mapping[str, np.ndarray]) -> None:
    targets = {name: p.data for name, p in model.named_parameters()}
    targets.update(dict(model.named_buffers()))
    missing = sorted(set(targets) - set(entries))
    if missing:
        raise CheckpointError(f"checkpoint is missing {len(missing)} entries, e.g. {missing[:3]}")
    for name, dst in targets.items():
        src = entries[name]
        if src.shape != dst.shape:
            raise CheckpointError(f"entry {name!r}: shape {src.shape} does not match model {dst.shape}")
        dst[...] = src
