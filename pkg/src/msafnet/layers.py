"""Composite layers: the multi-path 3D encoder, the convLSTM cell and the decoder."""
from __future__ import annotations

from collections.abc import Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import RunningStats, Tensor

FULL_CHANNELS = (64, 64, 128, 128, 256, 256, 512, 512)
FULL_HIDDEN = 256
FULL_DECODER = (128, 64)


class Module:
    """Named parameters, running statistics and a train/eval flag."""

    training = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, RunningStats):
                yield full + ".running_mean", value.mean
                yield full + ".running_var", value.var
            elif isinstance(value, Module):
                yield from value.named_buffers(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def modules(self) -> Iterator[Module]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> Module:
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def init_conv(rng: np.random.Generator, out_ch: int, in_ch: int, kernel: Sequence[int], dtype) -> Tensor:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights."""
    fan_in = in_ch * int(np.prod(kernel))
    bound = 1.0 / np.sqrt(fan_in)
    w = rng.uniform(-bound, bound, size=(out_ch, in_ch, *kernel))
    return Tensor(w, requires_grad=True, dtype=dtype)


def _zeros(n: int, dtype) -> Tensor:
    return Tensor(np.zeros(n), requires_grad=True, dtype=dtype)


def _ones(n: int, dtype) -> Tensor:
    return Tensor(np.ones(n), requires_grad=True, dtype=dtype)


class Conv(Module):
    def __init__(self, in_ch: int, out_ch: int, nd: int, rng, dtype):
        self.weight = init_conv(rng, out_ch, in_ch, (3,) * nd, dtype)
        self.bias = _zeros(out_ch, dtype)
        self.nd = nd

    def __call__(self, x: Tensor) -> Tensor:
        if self.nd == 3:
            return T.conv3d(x, self.weight, self.bias, (1, 1, 1), (1, 1, 1))
        return T.conv2d(x, self.weight, self.bias, (1, 1))


class BatchNorm(Module):
    def __init__(self, channels: int, dtype):
        self.gamma = _ones(channels, dtype)
        self.beta = _zeros(channels, dtype)
        self.stats = RunningStats(channels, dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.stats, self.training)


# ----------------------------------------------------------------- encoder
@dataclass(frozen=True)
class IntegrationStage:
    """Block sequence of one integration, e.g. ``("conv3d", "bn3d", ..., "pool3d")``."""

    blocks: tuple[str, ...]
    channels: tuple[int, int]


def integration_plan(channels: Sequence[int]) -> list[IntegrationStage]:
    """Four integrations from an 8-entry conv width list.

    Integrations 1-3 are conv3D, BN3D, conv3D, BN3D, Pool3D; the fourth drops
    the pooling and the trailing BN, giving 18 blocks and 3 pools in total.
    """
    channels = tuple(int(c) for c in channels)
    if len(channels) != 8 or any(c <= 0 for c in channels):
        raise ValueError(f"channel plan needs 8 positive widths, got {channels}")
    full = ("conv3d", "bn3d", "conv3d", "bn3d", "pool3d")
    last = ("conv3d", "bn3d", "conv3d")
    return [IntegrationStage(full if i < 3 else last, channels[2 * i:2 * i + 2]) for i in range(4)]


class M3DEPath(Module):
    """One encoder path: [N, Cin, T, R, R] -> [N, T, C_out, R/8, R/8].

    Each conv3D is followed by ReLU; the ReLU sits after the BN3D where one
    follows (conv -> BN -> ReLU), and directly after the conv otherwise.
    """

    def __init__(self, in_channels: int, channels: Sequence[int] = FULL_CHANNELS,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = np.random.default_rng(0) if rng is None else rng
        self.in_channels = int(in_channels)
        self.stages = integration_plan(channels)
        self.layers: list[Module | str] = []
        prev = self.in_channels
        width_iter = iter(channels)
        for stage in self.stages:
            for block in stage.blocks:
                if block == "conv3d":
                    out = next(width_iter)
                    self.layers.append(Conv(prev, out, 3, rng, dtype))
                    prev = out
                elif block == "bn3d":
                    self.layers.append(BatchNorm(prev, dtype))
                else:
                    self.layers.append("pool3d")
        self.out_channels = prev

    @property
    def num_blocks(self) -> int:
        return sum(len(s.blocks) for s in self.stages)

    @property
    def num_pools(self) -> int:
        return sum(s.blocks.count("pool3d") for s in self.stages)

    def __call__(self, clip: Tensor) -> Tensor:
        return m3de_forward(self, clip)


def m3de_forward(path: M3DEPath, clip: Tensor) -> Tensor:
    if clip.ndim != 5:
        raise ValueError(f"M3DE input must be [N,C,T,H,W], got shape {clip.shape}")
    n, c, t, h, w = clip.shape
    if c != path.in_channels:
        raise ValueError(f"M3DE path expects {path.in_channels} input channels, got {c}")
    if t < 1:
        raise ValueError("M3DE input needs at least one frame")
    scale = 2 ** path.num_pools
    if h != w or h % scale or h < scale:
        raise ValueError(
            f"M3DE input must be square with side divisible by {scale} "
            f"(256 for the full-size config, 64 for the reduced one); got {h}x{w}"
        )
    x = clip
    layers = path.layers
    for i, layer in enumerate(layers):
        if layer == "pool3d":
            x = T.maxpool3d(x)
            continue
        x = layer(x)
        nxt = layers[i + 1] if i + 1 < len(layers) else None
        if isinstance(layer, BatchNorm) or (isinstance(layer, Conv) and not isinstance(nxt, BatchNorm)):
            x = T.relu(x)
    # [N, C, T, h, w] -> [N, T, C, h, w]
    return T.transpose(x, (0, 2, 1, 3, 4))


# ---------------------------------------------------------------- convLSTM
GATES = ("i", "f", "g", "o")


class ConvLSTMCell(Module):
    """Convolutional LSTM cell with separate input and recurrent kernels per gate."""

    def __init__(self, input_channels: int = 512, hidden_channels: int = FULL_HIDDEN,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = np.random.default_rng(0) if rng is None else rng
        self.input_channels = int(input_channels)
        self.hidden_channels = int(hidden_channels)
        for gate in GATES:
            setattr(self, f"W_z{gate}", init_conv(rng, hidden_channels, input_channels, (3, 3), dtype))
            setattr(self, f"W_h{gate}", init_conv(rng, hidden_channels, hidden_channels, (3, 3), dtype))
        for gate in GATES:
            setattr(self, f"b_z{gate}", _zeros(hidden_channels, dtype))
            setattr(self, f"b_h{gate}", _zeros(hidden_channels, dtype))

    def kernels(self, source: str) -> tuple[list[Tensor], list[Tensor]]:
        ws = [getattr(self, f"W_{source}{g}") for g in GATES]
        bs = [getattr(self, f"b_{source}{g}") for g in GATES]
        return ws, bs

    def zero_state(self, n: int, h: int, w: int, dtype) -> tuple[Tensor, Tensor]:
        z = np.zeros((n, self.hidden_channels, h, w), dtype=dtype)
        return Tensor._wrap(z), Tensor._wrap(z.copy())


def convlstm_step(cell: ConvLSTMCell, z_t: Tensor, h_prev: Tensor, c_prev: Tensor,
                  return_gates: bool = False):
    """One recurrence step; returns ``(H_t, C_t)`` (plus the gate dict on request).

    The four input kernels and the four recurrent kernels are concatenated
    along the output axis so each source is convolved once.
    """
    hid = cell.hidden_channels
    if z_t.ndim != 4 or z_t.shape[1] != cell.input_channels:
        raise ValueError(f"convLSTM input must be [N,{cell.input_channels},h,w], got {z_t.shape}")
    expected = (z_t.shape[0], hid) + z_t.shape[2:]
    if h_prev.shape != expected or c_prev.shape != expected:
        raise ValueError(f"convLSTM state must have shape {expected}, got H {h_prev.shape}, C {c_prev.shape}")
    wz, bz = cell.kernels("z")
    wh, bh = cell.kernels("h")
    pre = T.add(
        T.conv2d(z_t, T.concat(wz, 0), T.concat(bz, 0)),
        T.conv2d(h_prev, T.concat(wh, 0), T.concat(bh, 0)),
    )
    a_i, a_f, a_g, a_o = T.split(pre, 4, axis=1)
    i = T.sigmoid(a_i)
    f = T.sigmoid(a_f)
    g = T.tanh(a_g)
    o = T.sigmoid(a_o)
    c_t = T.add(T.mul(f, c_prev), T.mul(i, g))
    h_t = T.mul(o, T.tanh(c_t))
    if return_gates:
        return h_t, c_t, {"i": i, "f": f, "g": g, "o": o}
    return h_t, c_t


def convlstm_unroll(cell: ConvLSTMCell, z_seq: Tensor) -> Tensor:
    """Run the cell over ``z_seq[N, T, C, h, w]`` from zero state; return ``H_T``."""
    if z_seq.ndim != 5:
        raise ValueError(f"convLSTM sequence must be [N,T,C,h,w], got shape {z_seq.shape}")
    n, steps, _, h, w = z_seq.shape
    if steps == 0:
        raise ValueError("convLSTM sequence is empty (T = 0)")
    h_t, c_t = cell.zero_state(n, h, w, z_seq.dtype)
    for t in range(steps):
        h_t, c_t = convlstm_step(cell, z_seq[:, t], h_t, c_t)
    return h_t


# ------------------------------------------------------------------ decoder
class DAMDDecoder(Module):
    """Three x2 upsampling stages ending in a single-channel sigmoid map."""

    def __init__(self, in_channels: int = FULL_HIDDEN, widths: Sequence[int] = FULL_DECODER,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = np.random.default_rng(0) if rng is None else rng
        w1, w2 = (int(v) for v in widths)
        self.in_channels = int(in_channels)
        self.widths = (w1, w2)
        self.conv1 = Conv(in_channels, w1, 2, rng, dtype)
        self.bn1 = BatchNorm(w1, dtype)
        self.conv2 = Conv(w1, w2, 2, rng, dtype)
        self.bn2 = BatchNorm(w2, dtype)
        self.conv3 = Conv(w2, 1, 2, rng, dtype)

    def __call__(self, a: Tensor) -> Tensor:
        return damd_forward(self, a)


def damd_forward(dec: DAMDDecoder, a: Tensor) -> Tensor:
    if a.ndim != 4 or a.shape[1] != dec.in_channels:
        raise ValueError(f"decoder input must be [N,{dec.in_channels},h,w], got shape {a.shape}")
    x = T.upsample2x(a)
    x = dec.bn1(T.relu(dec.conv1(x)))
    x = T.upsample2x(x)
    x = dec.bn2(T.relu(dec.conv2(x)))
    x = T.upsample2x(x)
    return T.sigmoid(dec.conv3(x))
