"""Binary PGM (P5) / PPM (P6) reading and writing, maxval 255 only."""
from __future__ import annotations

from pathlib import Path

import numpy as np

FTA_SCALE = 255.0
NUM_CLASSES = 19


class NetpbmError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.reason = msg
        self.offset = offset


def _header(buf: bytes) -> tuple[bytes, int, int, int, int]:
    """Magic, width, height, maxval and the payload offset."""
    if len(buf) < 2:
        raise NetpbmError("file too short for a netpbm magic number", 0)
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"unsupported magic {magic!r}; expected b'P5' or b'P6'", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and buf[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise NetpbmError("malformed header: expected a decimal number", start)
        fields.append((int(buf[start:pos]), start))
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise NetpbmError("header must end with a single whitespace byte", pos)
    pos += 1
    (width, _), (height, _), (maxval, mpos) = fields
    if maxval != 255:
        raise NetpbmError(f"maxval must be 255, got {maxval}", mpos)
    if width <= 0 or height <= 0:
        raise NetpbmError(f"non-positive image size {width}x{height}", fields[0][1])
    return magic, width, height, maxval, pos


def decode(buf: bytes) -> np.ndarray:
    """``uint8`` array: ``[H, W]`` for P5, ``[H, W, 3]`` for P6."""
    magic, width, height, _, pos = _header(buf)
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    have = len(buf) - pos
    if have < need:
        raise NetpbmError(f"truncated payload: {have} of {need} bytes present", len(buf))
    if have > need:
        raise NetpbmError(f"{have - need} trailing bytes after payload", pos + need)
    arr = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape).copy()


def encode(img: np.ndarray) -> bytes:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"netpbm payload must be uint8, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"expected [H,W] or [H,W,3] image, got shape {img.shape}")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img).tobytes()


def read(path) -> np.ndarray:
    try:
        return decode(Path(path).read_bytes())
    except NetpbmError as exc:
        raise NetpbmError(f"{path}: {exc.reason}", exc.offset) from None


def write(path, img: np.ndarray) -> None:
    Path(path).write_bytes(encode(img))


def load_frame(path) -> np.ndarray:
    """RGB frame as float32 ``[3, H, W]`` in [0, 1]."""
    img = read(path)
    if img.ndim != 3:
        raise NetpbmError(f"{path}: expected a P6 colour frame", 0)
    return (img.astype(np.float32) / 255.0).transpose(2, 0, 1)


def load_map(path, kind: str = "fta") -> np.ndarray:
    """Grey map as float32 ``[H, W]``.

    ``kind="fta"`` scales by 1/255; ``kind="semantic"`` maps class ids
    0..18 onto [0, 1].
    """
    img = read(path)
    if img.ndim != 2:
        raise NetpbmError(f"{path}: expected a P5 grey map", 0)
    if kind == "fta":
        return img.astype(np.float32) / np.float32(FTA_SCALE)
    if kind == "semantic":
        return img.astype(np.float32) / np.float32(NUM_CLASSES - 1)
    raise ValueError(f"unknown map kind {kind!r}")


def to_uint8(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to 0..255 with rounding."""
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
