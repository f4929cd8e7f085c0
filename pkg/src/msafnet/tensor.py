"""Dense tensors with reverse-mode differentiation.

Every array-valued quantity of the model (clips, feature volumes, recurrent
states, attention maps) lives in a :class:`Tensor`. Operations executed while
gradient recording is enabled append themselves to an implicit compute graph
that :meth:`Tensor.backward` walks once in reverse topological order.

Storage is a contiguous numpy array. The default precision is float32;
gradient checks construct tensors with ``dtype=np.float64``.
"""
from __future__ import annotations

import contextlib
import threading
from collections.abc import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32

# im2col chunks are capped at this many elements (~256 MB in float32)
_MAX_COLS = 64 * 1024 * 1024

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (thread-local)."""
    prev = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextlib.contextmanager
def record_kinks(log: list):
    """Append a signature of every ReLU mask and pooling argmax to ``log``.

    Used by finite-difference checks to detect probes that cross a
    non-differentiable point.
    """
    prev = getattr(_state, "kinks", None)
    _state.kinks = log
    try:
        yield log
    finally:
        _state.kinks = prev


def _log_kink(arr: np.ndarray) -> None:
    log = getattr(_state, "kinks", None)
    if log is not None:
        log.append(arr.tobytes())


class Tensor:
    """N-dimensional real array with an optional gradient buffer.

    Parameters
    ----------
    data : array_like
        Values. Copied into a contiguous array of ``dtype``.
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` receive ``.grad`` after a
        backward pass through any graph that consumed them.
    dtype : numpy dtype, optional
        Storage precision; float32 by default.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if dtype is None:
            dtype = DEFAULT_DTYPE
        arr = np.array(data, dtype=dtype, copy=True, order="C")
        self.data: np.ndarray = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self._op = ""
        self._consumed = False

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> Tensor:
        t = cls.__new__(cls)
        t.data = np.asarray(arr, order="C")
        t.requires_grad = False
        t.grad = None
        t._parents = ()
        t._backward = None
        t._op = ""
        t._consumed = False
        return t

    # ------------------------------------------------------------------ info
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> Tensor:
        return Tensor._wrap(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    def __len__(self) -> int:
        return self.shape[0]

    # -------------------------------------------------------------- backward
    def backward(self) -> None:
        """Populate ``.grad`` of every leaf reachable from this scalar."""
        if self.data.size != 1 or self.data.ndim != 0:
            raise ValueError(f"backward() needs a scalar (0-d) tensor, got shape {self.shape}")
        if self._consumed:
            raise RuntimeError("backward() already ran on this graph; rebuild it with a new forward pass")
        if not self.requires_grad:
            raise RuntimeError("tensor does not require grad; nothing to differentiate")

        order = _topological_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if node._backward is None:
                if g is None:
                    g = np.zeros_like(node.data)
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            if g is None:
                g = np.zeros_like(node.data)
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                pg = np.asarray(pg, dtype=parent.data.dtype)
                if pg.shape != parent.shape:
                    raise AssertionError(f"{node._op}: gradient shape {pg.shape} != {parent.shape}")
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            node._consumed = True
            node._backward = _consumed_backward
            node._parents = ()

    # ------------------------------------------------------------- operators
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)


def _consumed_backward(g):
    raise RuntimeError("backward() already ran on this graph; rebuild it with a new forward pass")


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._consumed and node is root:
            raise RuntimeError("backward() already ran on this graph; rebuild it with a new forward pass")
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        dtype = DEFAULT_DTYPE
    return Tensor._wrap(np.asarray(x, dtype=dtype))


def _result(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    out = Tensor._wrap(data)
    if is_grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
        out._op = op
    return out


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        b = Tensor._wrap(np.asarray(b, dtype=a.dtype))
    elif isinstance(b, Tensor) and not isinstance(a, Tensor):
        a = Tensor._wrap(np.asarray(a, dtype=b.dtype))
    elif not isinstance(a, Tensor):
        a, b = as_tensor(a), as_tensor(b)
    return a, b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise
def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product with numpy broadcasting."""
    a, b = _coerce_pair(a, b)

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(a.data * b.data, (a, b), backward, "mul")


hadamard = mul


def div(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward, "div")


def scalar_add(x: Tensor, c: float) -> Tensor:
    def backward(g):
        return (g,)

    return _result(x.data + x.dtype.type(c), (x,), backward, "scalar_add")


def scalar_mul(x: Tensor, c: float) -> Tensor:
    c = x.dtype.type(c)

    def backward(g):
        return (g * c,)

    return _result(x.data * c, (x,), backward, "scalar_mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _log_kink(mask)

    def backward(g):
        return (g * mask,)

    return _result(np.where(mask, x.data, x.dtype.type(0)), (x,), backward, "relu")


def sigmoid(x: Tensor) -> Tensor:
    half = x.dtype.type(0.5)
    out = half * (np.tanh(x.data * half) + 1)

    def backward(g):
        return (g * out * (1 - out),)

    return _result(out, (x,), backward, "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def backward(g):
        return (g * (1 - out * out),)

    return _result(out, (x,), backward, "tanh")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def backward(g):
        return (g * out,)

    return _result(out, (x,), backward, "exp")


def log(x: Tensor) -> Tensor:
    def backward(g):
        return (g / x.data,)

    return _result(np.log(x.data), (x,), backward, "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def backward(g):
        return (g / (2 * out),)

    return _result(out, (x,), backward, "sqrt")


# ----------------------------------------------------------------- reductions
def _norm_axes(axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    return scalar_mul(tsum(x, axis=axes, keepdims=keepdims), 1.0 / count)


# ------------------------------------------------------------- shape / layout
def reshape(x: Tensor, shape) -> Tensor:
    def backward(g):
        return (g.reshape(x.shape),)

    return _result(x.data.reshape(shape), (x,), backward, "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.ascontiguousarray(g.transpose(inverse)),)

    return _result(np.ascontiguousarray(x.data.transpose(axes)), (x,), backward, "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        full[idx] = g
        return (full,)

    return _result(np.ascontiguousarray(x.data[idx]), (x,), backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        return tuple(np.ascontiguousarray(p) for p in np.split(g, bounds, axis=axis))

    return _result(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


def split(x: Tensor, sections: int, axis: int = 0) -> list[Tensor]:
    n = x.shape[axis]
    if n % sections:
        raise ValueError(f"cannot split extent {n} into {sections} equal parts")
    step = n // sections
    out = []
    for i in range(sections):
        idx = [slice(None)] * x.ndim
        idx[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(x, tuple(idx)))
    return out


# -------------------------------------------------------------- convolutions
def _triple(v, nd: int, name: str) -> tuple[int, ...]:
    if isinstance(v, int):
        return (v,) * nd
    v = tuple(int(a) for a in v)
    if len(v) != nd:
        raise ValueError(f"{name} needs {nd} entries, got {v}")
    return v


def _conv_geometry(x: np.ndarray, w: np.ndarray, stride, pad, name: str):
    nd = w.ndim - 2
    if x.ndim != nd + 2:
        raise ValueError(f"{name}: input must be {nd + 2}-D [N,C,...], got shape {x.shape}")
    if x.shape[1] != w.shape[1]:
        raise ValueError(
            f"{name}: input has {x.shape[1]} channels but kernel expects {w.shape[1]} "
            f"(input shape {x.shape}, kernel shape {w.shape})"
        )
    stride = _triple(stride, nd, "stride")
    pad = _triple(pad, nd, "pad")
    if any(s <= 0 for s in stride):
        raise ValueError(f"{name}: strides must be positive, got {stride}")
    if any(p < 0 for p in pad):
        raise ValueError(f"{name}: padding must be non-negative, got {pad}")
    out = []
    for i in range(nd):
        span = x.shape[2 + i] + 2 * pad[i] - w.shape[2 + i]
        n = span // stride[i] + 1 if span >= 0 else 0
        if n <= 0:
            raise ValueError(
                f"{name}: zero-size output along spatial axis {i} "
                f"(extent {x.shape[2 + i]}, pad {pad[i]}, kernel {w.shape[2 + i]}, stride {stride[i]})"
            )
        out.append(n)
    return nd, stride, pad, tuple(out)


def _channel_major_padded(x: np.ndarray, pad) -> np.ndarray:
    """``x[N, C, *S]`` as a contiguous, zero-padded ``[C, N, *S]`` array."""
    xc = np.swapaxes(x, 0, 1)
    if not any(pad):
        return np.ascontiguousarray(xc)
    return np.pad(xc, [(0, 0), (0, 0)] + [(p, p) for p in pad])


def _tap_slices(offset, stride, counts, start: int = 0) -> tuple:
    """Input slices feeding output rows ``start:start+counts[0]`` through kernel tap ``offset``."""
    sl = [slice(None), slice(None)]
    for i, (o, s, n) in enumerate(zip(offset, stride, counts)):
        lo = o + (start * s if i == 0 else 0)
        sl.append(slice(lo, lo + s * (n - 1) + 1, s))
    return tuple(sl)


def _columns(xp: np.ndarray, ksize, stride, out_shape, start: int, stop: int) -> np.ndarray:
    """im2col matrix ``[C*kvol, N*rows*prod(out[1:])]`` for output rows ``start:stop``."""
    c, n = xp.shape[0], xp.shape[1]
    counts = (stop - start,) + tuple(out_shape[1:])
    kvol = int(np.prod(ksize))
    cols = np.empty((c, kvol, n) + counts, dtype=xp.dtype)
    for j, offset in enumerate(np.ndindex(*ksize)):
        cols[:, j] = xp[_tap_slices(offset, stride, counts, start)]
    return cols.reshape(c * kvol, -1)


def _row_chunk(x: np.ndarray, w: np.ndarray, out_shape) -> int:
    per_row = x.shape[0] * int(np.prod(out_shape[1:])) * int(np.prod(w.shape[1:]))
    return max(1, min(out_shape[0], _MAX_COLS // max(per_row, 1)))


def _conv_forward(x, w, b, stride, pad, out_shape):
    xp = _channel_major_padded(x, pad)
    n, k = x.shape[0], w.shape[0]
    wm = w.reshape(k, -1)
    y = np.empty((k, n) + tuple(out_shape), dtype=x.dtype)
    step = _row_chunk(x, w, out_shape)
    for r in range(0, out_shape[0], step):
        stop = min(r + step, out_shape[0])
        cols = _columns(xp, w.shape[2:], stride, out_shape, r, stop)
        y[:, :, r:stop] = (wm @ cols).reshape(y[:, :, r:stop].shape)
    if b is not None:
        y += b.reshape((k,) + (1,) * (y.ndim - 1))
    return np.ascontiguousarray(np.swapaxes(y, 0, 1))


def _conv_backward(g, x, w, stride, pad, out_shape, need_x: bool, need_w: bool):
    nd = w.ndim - 2
    ksize = w.shape[2:]
    k, c = w.shape[0], w.shape[1]
    gc = np.ascontiguousarray(np.swapaxes(g, 0, 1))  # [K, N, *out]
    gx = gw = None
    if need_w:
        xp = _channel_major_padded(x, pad)
        gwm = np.zeros((k, w[0].size), dtype=w.dtype)
        step = _row_chunk(x, w, out_shape)
        for r in range(0, out_shape[0], step):
            stop = min(r + step, out_shape[0])
            cols = _columns(xp, ksize, stride, out_shape, r, stop)
            gwm += gc[:, :, r:stop].reshape(k, -1) @ cols.T
        gw = gwm.reshape(w.shape)
    if need_x:
        padded = (c, x.shape[0]) + tuple(x.shape[2 + i] + 2 * pad[i] for i in range(nd))
        gxp = np.zeros(padded, dtype=x.dtype)
        wt = w.reshape(k, -1).T
        kvol = int(np.prod(ksize))
        step = _row_chunk(x, w, out_shape)
        for r in range(0, out_shape[0], step):
            stop = min(r + step, out_shape[0])
            block = gc[:, :, r:stop]
            gcols = (wt @ block.reshape(k, -1)).reshape((c, kvol) + block.shape[1:])
            counts = (stop - r,) + tuple(out_shape[1:])
            for j, offset in enumerate(np.ndindex(*ksize)):
                gxp[_tap_slices(offset, stride, counts, r)] += gcols[:, j]
        crop = (slice(None), slice(None)) + tuple(slice(pad[i], pad[i] + x.shape[2 + i]) for i in range(nd))
        gx = np.ascontiguousarray(np.swapaxes(gxp[crop], 0, 1))
    return gx, gw


def _conv(x: Tensor, w: Tensor, b: Tensor | None, stride, pad, name: str) -> Tensor:
    nd, stride, pad, out_shape = _conv_geometry(x.data, w.data, stride, pad, name)
    if b is not None and b.shape != (w.shape[0],):
        raise ValueError(f"{name}: bias shape {b.shape} does not match {w.shape[0]} output channels")
    y = _conv_forward(x.data, w.data, None if b is None else b.data, stride, pad, out_shape)

    def backward(g):
        gx, gw = _conv_backward(g, x.data, w.data, stride, pad, out_shape, x.requires_grad, w.requires_grad)
        gb = None
        if b is not None and b.requires_grad:
            gb = g.sum(axis=(0,) + tuple(range(2, 2 + nd)))
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(y, parents, backward, name)


def conv3d(x: Tensor, w: Tensor, b: Tensor | None = None, stride=(1, 1, 1), pad=(1, 1, 1)) -> Tensor:
    """3-D cross-correlation of ``x[N,C,T,H,W]`` with ``w[K,C,kT,kH,kW]``."""
    if w.ndim != 5:
        raise ValueError(f"conv3d: kernel must be 5-D [K,C,kT,kH,kW], got shape {w.shape}")
    return _conv(x, w, b, stride, pad, "conv3d")


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, pad=(1, 1)) -> Tensor:
    """2-D cross-correlation with unit stride."""
    if w.ndim != 4:
        raise ValueError(f"conv2d: kernel must be 4-D [K,C,kH,kW], got shape {w.shape}")
    return _conv(x, w, b, (1, 1), pad, "conv2d")


# -------------------------------------------------------------- normalisation
class RunningStats:
    """Per-channel running mean/variance for batch normalisation."""

    def __init__(self, channels: int, dtype=None):
        dtype = DEFAULT_DTYPE if dtype is None else dtype
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    @property
    def channels(self) -> int:
        return self.mean.shape[0]


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: RunningStats, training: bool,
               eps: float = BN_EPS, momentum: float = BN_MOMENTUM) -> Tensor:
    """Per-channel batch normalisation over every axis except axis 1.

    In training mode the batch statistics normalise ``x`` and update ``state``
    in place (running variance uses the unbiased estimate). In evaluation mode
    the running statistics are used as constants.
    """
    c = x.shape[1] if x.ndim >= 2 else -1
    if c != gamma.shape[0] or c != beta.shape[0] or c != state.channels:
        raise ValueError(
            f"batch_norm: channel mismatch (input {x.shape}, gamma {gamma.shape}, "
            f"beta {beta.shape}, running stats {state.channels})"
        )
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    count = x.size // c
    dt = x.dtype.type

    if training:
        if count <= 1:
            raise ValueError("batch_norm: training mode needs more than one value per channel")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        state.mean[...] = (1 - momentum) * state.mean + momentum * mu
        state.var[...] = (1 - momentum) * state.var + momentum * var * (count / (count - 1))
    else:
        mu = state.mean.astype(x.dtype)
        var = state.var.astype(x.dtype)
    inv_std = (1.0 / np.sqrt(var + dt(eps))).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        ggamma = (g * xhat).sum(axis=axes) if gamma.requires_grad else None
        gbeta = g.sum(axis=axes) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            scale = (gamma.data * inv_std).reshape(bshape)
            if training:
                g_mean = g.mean(axis=axes, keepdims=True)
                gx_mean = (g * xhat).mean(axis=axes, keepdims=True)
                gx = scale * (g - g_mean - xhat * gx_mean)
            else:
                gx = scale * g
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), backward, "batch_norm")


# ------------------------------------------------------------------- pooling
def maxpool3d(x: Tensor, kernel=(1, 2, 2), stride=(1, 2, 2)) -> Tensor:
    """Non-overlapping spatial max pooling of ``x[N,C,T,H,W]``.

    Only the ``(1, 2, 2)`` window with matching stride is supported: the
    temporal axis passes through untouched. Gradients go to the first maximum
    of each window in raster order.
    """
    if tuple(kernel) != (1, 2, 2) or tuple(stride) != (1, 2, 2):
        raise ValueError(f"maxpool3d supports kernel=stride=(1,2,2) only, got {kernel}/{stride}")
    if x.ndim != 5:
        raise ValueError(f"maxpool3d: input must be 5-D [N,C,T,H,W], got shape {x.shape}")
    n, c, t, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool3d: spatial extents must be even, got H={h}, W={w}")
    blocks = x.data.reshape(n, c, t, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 3, 5, 4, 6)
    blocks = blocks.reshape(n, c, t, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    _log_kink(arg)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((n, c, t, h // 2, w // 2, 4), dtype=g.dtype)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gb = gb.reshape(n, c, t, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 3, 5, 4, 6)
        return (np.ascontiguousarray(gb.reshape(n, c, t, h, w)),)

    return _result(np.ascontiguousarray(out), (x,), backward, "maxpool3d")


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling of the two trailing axes."""
    if x.ndim < 2:
        raise ValueError(f"upsample2x: need at least 2 axes, got shape {x.shape}")
    out = x.data.repeat(2, axis=-2).repeat(2, axis=-1)
    h, w = x.shape[-2:]

    def backward(g):
        return (g.reshape(x.shape[:-2] + (h, 2, w, 2)).sum(axis=(-3, -1)),)

    return _result(out, (x,), backward, "upsample2x")
