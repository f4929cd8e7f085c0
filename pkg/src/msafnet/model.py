"""The two-path attention model with semantic-guided attentive fusion."""
from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .layers import (
    FULL_CHANNELS,
    FULL_DECODER,
    FULL_HIDDEN,
    ConvLSTMCell,
    DAMDDecoder,
    M3DEPath,
    Module,
    convlstm_unroll,
    integration_plan,
)
from .tensor import Tensor

FUSION_MODES = ("vision_only", "early", "late")
# ablation names used in result tables
ABLATION_NAMES = {"vision_only": "ours/S", "early": "ours-S-EF", "late": "ours-S-LF"}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyper-parameters.

    ``full()`` is the full-size network (256x256 input, 512-channel encoder,
    256-channel recurrent state). ``compact()`` keeps the layer structure but
    narrows every width so training fits a laptop CPU at 64x64.
    """

    fusion_mode: str = "late"
    resolution: int = 256
    channels: tuple[int, ...] = FULL_CHANNELS
    semantic_channels: tuple[int, ...] | None = None
    hidden: int = FULL_HIDDEN
    decoder: tuple[int, int] = FULL_DECODER
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"fusion_mode must be one of {FUSION_MODES}, got {self.fusion_mode!r}")
        if self.resolution <= 0 or self.resolution % 8:
            raise ValueError(f"resolution must be a positive multiple of 8, got {self.resolution}")
        if self.fusion_mode == "early" and self.sem_channels[-1] != self.channels[-1]:
            raise ValueError("early fusion needs equal output widths on both encoder paths")

    @property
    def sem_channels(self) -> tuple[int, ...]:
        return tuple(self.channels if self.semantic_channels is None else self.semantic_channels)

    @classmethod
    def full(cls, fusion_mode: str = "late", resolution: int = 256, **kw) -> ModelConfig:
        return cls(fusion_mode=fusion_mode, resolution=resolution, **kw)

    @classmethod
    def compact(cls, fusion_mode: str = "late", resolution: int = 64, **kw) -> ModelConfig:
        kw.setdefault("channels", (8, 8, 16, 16, 16, 16, 32, 32))
        kw.setdefault("hidden", 16)
        kw.setdefault("decoder", (16, 8))
        return cls(fusion_mode=fusion_mode, resolution=resolution, **kw)

    @classmethod
    def tiny(cls, fusion_mode: str = "late", resolution: int = 8, **kw) -> ModelConfig:
        kw.setdefault("channels", (4, 4, 8, 8, 12, 12, 16, 16))
        kw.setdefault("hidden", 8)
        kw.setdefault("decoder", (6, 4))
        kw.setdefault("dtype", "float64")
        return cls(fusion_mode=fusion_mode, resolution=resolution, **kw)


class MSAFNetModel(Module):
    """Vision path, optional semantic path, convLSTM cell(s) and decoder.

    * ``vision_only``: one encoder, one cell; no semantic parameters.
    * ``early``: features fused per frame as ``Z_v * (1 + Z_s)``, one shared cell.
    * ``late``: one cell per path, hidden states fused as ``H_v * (1 + H_s)``.
    """

    def __init__(self, config: ModelConfig | None = None):
        cfg = ModelConfig() if config is None else config
        self.config = cfg
        dtype = np.dtype(cfg.dtype)
        rng = np.random.default_rng(cfg.seed)
        self.vision_path = M3DEPath(3, cfg.channels, rng, dtype)
        if cfg.fusion_mode != "vision_only":
            self.semantic_path = M3DEPath(1, cfg.sem_channels, rng, dtype)
        feat = cfg.channels[-1]
        if cfg.fusion_mode == "late":
            self.vision_cell = ConvLSTMCell(feat, cfg.hidden, rng, dtype)
            self.semantic_cell = ConvLSTMCell(cfg.sem_channels[-1], cfg.hidden, rng, dtype)
        else:
            self.cell = ConvLSTMCell(feat, cfg.hidden, rng, dtype)
        self.decoder = DAMDDecoder(cfg.hidden, cfg.decoder, rng, dtype)

    @property
    def fusion_mode(self) -> str:
        return self.config.fusion_mode

    @property
    def dtype(self):
        return np.dtype(self.config.dtype)

    def encode(self, clip_rgb: Tensor, clip_sem: Tensor | None = None) -> Tensor:
        """Fused representation fed to the decoder, ``[N, hidden, R/8, R/8]``."""
        z_v = self.vision_path(clip_rgb)
        if self.fusion_mode == "vision_only":
            return convlstm_unroll(self.cell, z_v)
        z_s = self.semantic_path(clip_sem)
        if self.fusion_mode == "early":
            return saf_early(z_v, z_s, self.cell)
        h_v = convlstm_unroll(self.vision_cell, z_v)
        h_s = convlstm_unroll(self.semantic_cell, z_s)
        return saf_late(h_v, h_s)

    def __call__(self, clip_rgb: Tensor, *args) -> Tensor:
        return forward(self, clip_rgb, *args)


def saf_late(h_v: Tensor, h_s: Tensor) -> Tensor:
    """``H_v * (1 + H_s)`` on the final hidden states."""
    if h_v.shape != h_s.shape:
        raise ValueError(f"late fusion needs equal shapes, got {h_v.shape} and {h_s.shape}")
    return T.mul(h_v, T.scalar_add(h_s, 1.0))


def fuse_features(z_v: Tensor, z_s: Tensor) -> Tensor:
    if z_v.shape != z_s.shape:
        raise ValueError(f"early fusion needs equal shapes, got {z_v.shape} and {z_s.shape}")
    return T.mul(z_v, T.scalar_add(z_s, 1.0))


def saf_early(z_v: Tensor, z_s: Tensor, cell: ConvLSTMCell) -> Tensor:
    """Fuse every frame's features, then unroll the single shared cell."""
    return convlstm_unroll(cell, fuse_features(z_v, z_s))


def _check_clip(clip: Tensor, channels: int, resolution: int, name: str) -> None:
    if clip.ndim != 5 or clip.shape[1] != channels:
        raise ValueError(f"{name} must be [N,{channels},T,R,R], got shape {clip.shape}")
    if clip.shape[3:] != (resolution, resolution):
        raise ValueError(f"{name} must be {resolution}x{resolution} for this model, got {clip.shape[3:]}")


def forward(model: MSAFNetModel, clip_rgb: Tensor, *args) -> Tensor:
    """Predicted attention map of each clip's last frame, ``[N, 1, R, R]``.

    ``vision_only`` models take the RGB clip alone; fusion models also need
    the semantic clip ``[N, 1, T, R, R]``.
    """
    res = model.config.resolution
    _check_clip(clip_rgb, 3, res, "RGB clip")
    if model.fusion_mode == "vision_only":
        if args:
            raise TypeError("vision_only model takes no semantic clip")
        clip_sem = None
    else:
        if len(args) != 1 or args[0] is None:
            raise TypeError(f"{model.fusion_mode} fusion needs exactly one semantic clip")
        clip_sem = args[0]
        _check_clip(clip_sem, 1, res, "semantic clip")
        if clip_sem.shape[0] != clip_rgb.shape[0] or clip_sem.shape[2] != clip_rgb.shape[2]:
            raise ValueError(f"semantic clip {clip_sem.shape} does not match RGB clip {clip_rgb.shape}")
    return model.decoder(model.encode(clip_rgb, clip_sem))


def _conv_extent(n: int, kernel: int = 3, pad: int = 1, stride: int = 1) -> int:
    return (n + 2 * pad - kernel) // stride + 1


def output_shapes(config: ModelConfig, batch: int, frames: int) -> dict[str, tuple[int, ...]]:
    """Shape of every stage for a batch, derived from the block plan without running it.

    Walks the integration plan (3x3x3 convs with unit padding, (1,2,2)
    pools), the 3x3 convLSTM and the three x2 decoder stages.
    """
    t, side, ch = frames, config.resolution, 3
    for stage in integration_plan(config.channels):
        widths = iter(stage.channels)
        for block in stage.blocks:
            if block == "conv3d":
                t, side, ch = _conv_extent(t), _conv_extent(side), next(widths)
            elif block == "pool3d":
                if side % 2:
                    raise ValueError(f"pooling needs an even side, got {side}")
                side //= 2
    z = (batch, t, ch, side, side)
    a_side = _conv_extent(side)
    a = (batch, config.hidden, a_side, a_side)
    y_side = a_side
    for _ in range(3):
        y_side = _conv_extent(2 * y_side)
    return {
        "clip": (batch, 3, frames, config.resolution, config.resolution),
        "Z": z,
        "A": a,
        "Y": (batch, 1, y_side, y_side),
    }


@dataclass
class ParameterCount:
    encoder_vision: int
    encoder_semantic: int
    cells: int
    decoder: int
    by_name: dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.encoder_vision + self.encoder_semantic + self.cells + self.decoder


def count_parameters(model: MSAFNetModel) -> ParameterCount:
    by_name = {name: p.size for name, p in model.named_parameters()}

    def part(prefix: str) -> int:
        return sum(v for k, v in by_name.items() if k.startswith(prefix))

    cells = part("cell.") + part("vision_cell.") + part("semantic_cell.")
    return ParameterCount(part("vision_path."), part("semantic_path."), cells, part("decoder."), by_name)


def assert_mode_parameters(model: MSAFNetModel) -> None:
    names = {n.split(".")[0] for n, _ in model.named_parameters()}
    mode = model.fusion_mode
    expected = {"vision_path", "decoder"}
    expected |= {"cell"} if mode != "late" else {"vision_cell", "semantic_cell"}
    if mode != "vision_only":
        expected.add("semantic_path")
    if names != expected:
        raise AssertionError(f"{mode} model owns {sorted(names)}, expected {sorted(expected)}")


def sequence_features(model: MSAFNetModel, clip_rgb: Tensor, clip_sem: Tensor | None = None
                      ) -> dict[str, Tensor]:
    """Intermediate tensors ``Z_v`` (and ``Z_s``), ``A`` and ``Y`` for inspection."""
    out = {"Z_v": model.vision_path(clip_rgb)}
    if model.fusion_mode == "vision_only":
        a = convlstm_unroll(model.cell, out["Z_v"])
    else:
        out["Z_s"] = model.semantic_path(clip_sem)
        if model.fusion_mode == "early":
            a = saf_early(out["Z_v"], out["Z_s"], model.cell)
        else:
            a = saf_late(convlstm_unroll(model.vision_cell, out["Z_v"]),
                         convlstm_unroll(model.semantic_cell, out["Z_s"]))
    out["A"] = a
    out["Y"] = model.decoder(a)
    return out


def cells(model: MSAFNetModel) -> Sequence[ConvLSTMCell]:
    if model.fusion_mode == "late":
        return (model.vision_cell, model.semantic_cell)
    return (model.cell,)
