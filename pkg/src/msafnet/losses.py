"""Training objective: KL divergence plus negated linear correlation.

All functions take maps shaped ``[..., H, W]``; each trailing 2-D slice is one
map and the result is the mean over the leading (batch) axes.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

KL_EPS = 1e-7
_MAP_AXES = (-2, -1)


def _as_pair(y, y_hat) -> tuple[Tensor, Tensor]:
    if not isinstance(y_hat, Tensor):
        arr = np.asarray(y_hat)
        y_hat = T.as_tensor(arr, arr.dtype if arr.dtype.kind == "f" else None)
    y = y if isinstance(y, Tensor) else T.as_tensor(np.asarray(y, dtype=y_hat.dtype))
    if y.shape != y_hat.shape:
        raise ValueError(f"maps differ in shape: {y.shape} vs {y_hat.shape}")
    if y.ndim < 2:
        raise ValueError(f"maps need at least 2 axes, got shape {y.shape}")
    return y, y_hat


def _normalise(m: Tensor, name: str) -> Tensor:
    total = m.data.sum(axis=_MAP_AXES)
    if np.any(total <= 0):
        raise ValueError(f"{name} contains an all-zero map; cannot normalise to a distribution")
    return T.div(m, T.tsum(m, axis=_MAP_AXES, keepdims=True))


def kl_loss(y, y_hat, eps: float = KL_EPS) -> Tensor:
    """``sum_i P(i) log(eps + P(i) / (eps + Q(i)))`` on sum-normalised maps."""
    y, y_hat = _as_pair(y, y_hat)
    if np.any(y.data < 0) or np.any(y_hat.data < 0):
        raise ValueError("KL divergence needs non-negative maps")
    p = _normalise(y, "ground truth")
    q = _normalise(y_hat, "prediction")
    ratio = T.div(p, T.scalar_add(q, eps))
    per_map = T.tsum(T.mul(p, T.log(T.scalar_add(ratio, eps))), axis=_MAP_AXES)
    return T.mean(per_map)


def correlation(y, y_hat) -> Tensor:
    """Mean Pearson coefficient over maps (population moments)."""
    y, y_hat = _as_pair(y, y_hat)
    # test constancy on the raw values: the centred sums can be rounding noise
    if np.any(np.ptp(y.data, axis=_MAP_AXES) == 0) or np.any(np.ptp(y_hat.data, axis=_MAP_AXES) == 0):
        raise ValueError("correlation is undefined for a constant (zero-variance) map")
    a = T.sub(y, T.mean(y, axis=_MAP_AXES, keepdims=True))
    b = T.sub(y_hat, T.mean(y_hat, axis=_MAP_AXES, keepdims=True))
    saa = T.tsum(T.mul(a, a), axis=_MAP_AXES)
    sbb = T.tsum(T.mul(b, b), axis=_MAP_AXES)
    if np.any(saa.data <= 0) or np.any(sbb.data <= 0):
        raise ValueError("correlation is undefined for a constant (zero-variance) map")
    cov = T.tsum(T.mul(a, b), axis=_MAP_AXES)
    return T.mean(T.div(cov, T.sqrt(T.mul(saa, sbb))))


def cc_loss(y, y_hat) -> Tensor:
    """Negated correlation coefficient; -1 for perfectly aligned maps."""
    return T.scalar_mul(correlation(y, y_hat), -1.0)


def loss_terms(y, y_hat, eps: float = KL_EPS) -> tuple[Tensor, Tensor, Tensor]:
    """``(total, kl, cc)`` with ``total = kl + cc``."""
    kl = kl_loss(y, y_hat, eps)
    cc = cc_loss(y, y_hat)
    return T.add(kl, cc), kl, cc


def total_loss(y, y_hat, eps: float = KL_EPS) -> Tensor:
    return loss_terms(y, y_hat, eps)[0]
