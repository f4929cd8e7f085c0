"""Central finite-difference checks for analytic gradients."""
from __future__ import annotations

import hashlib
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor, no_grad, record_kinks


def numerical_gradient(fn: Callable[[], float], arr: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. every element of ``arr``.

    ``arr`` is perturbed in place and restored after each probe.
    """
    grad = np.zeros_like(arr, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = fn()
        flat[i] = orig - step
        lo = fn()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def check_gradients(fn: Callable[..., Tensor], inputs: Sequence[Tensor], step: float = 1e-4,
                    floor: float = 1e-8) -> float:
    """Largest element-wise relative error between backward() and finite differences.

    ``fn(*inputs)`` must return a scalar tensor. Inputs should be float64
    leaves with ``requires_grad=True``.
    """
    for t in inputs:
        t.zero_grad()
    fn(*inputs).backward()
    analytic = [t.grad.copy() for t in inputs]

    def value() -> float:
        return float(fn(*inputs).data)

    worst = 0.0
    for t, ga in zip(inputs, analytic):
        gn = numerical_gradient(value, t.data, step)
        worst = max(worst, float(relative_error(ga, gn, floor).max()))
    return worst


@dataclass
class ProbeReport:
    max_error: float
    probes: int
    skipped: int
    worst_name: str = ""


def check_model_gradients(loss_fn: Callable[[], Tensor], named_params, probes_per_tensor: int = 3,
                          step: float = 1e-6, floor: float = 1e-5, seed: int = 0) -> ProbeReport:
    """Spot-check parameter gradients of a composed model.

    ``loss_fn()`` rebuilds the scalar loss from scratch. For each parameter
    tensor a few random elements are probed with central differences. A
    probe is skipped when the ReLU masks or pooling choices at ``x+h`` or
    ``x-h`` differ from those at ``x``: the difference quotient then spans a
    kink and says nothing about the derivative.
    """
    named_params = list(named_params)
    for _, p in named_params:
        p.zero_grad()
    loss_fn().backward()
    rng = np.random.default_rng(seed)

    def evaluate() -> tuple[float, bytes]:
        log: list[bytes] = []
        with no_grad(), record_kinks(log):
            value = float(loss_fn().data)
        return value, hashlib.sha256(b"".join(log)).digest()

    worst, worst_name, probes, skipped = 0.0, "", 0, 0
    for name, p in named_params:
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        for i in rng.permutation(flat.size)[:probes_per_tensor]:
            orig = flat[i]
            _, base = evaluate()
            flat[i] = orig + step
            hi, sig_hi = evaluate()
            flat[i] = orig - step
            lo, sig_lo = evaluate()
            flat[i] = orig
            if sig_hi != base or sig_lo != base:
                skipped += 1
                continue
            err = float(relative_error(np.array(grad[i]), np.array((hi - lo) / (2 * step)), floor))
            probes += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    return ProbeReport(worst, probes, skipped, worst_name)
