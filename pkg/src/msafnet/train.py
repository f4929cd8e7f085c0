"""Adam optimiser and the end-to-end training loop."""
from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .data import ClipSample
from .losses import loss_terms
from .tensor import Tensor


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_clips: int = 12
    clip_len: int = 5
    epochs: int = 3
    seed: int = 0
    resolution: int = 256

    def __post_init__(self):
        for name in ("learning_rate", "beta1", "beta2", "adam_eps", "batch_clips", "clip_len", "epochs",
                     "resolution"):
            if not getattr(self, name) > 0:
                raise ValueError(f"TrainConfig.{name} must be positive, got {getattr(self, name)!r}")
        if not (self.beta1 < 1 and self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> AdamState:
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], 0)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState,
              cfg: TrainConfig) -> Sequence[Tensor]:
    """Bias-corrected Adam update, in place; returns ``params``."""
    if not (len(params) == len(grads) == len(state.m) == len(state.v)):
        raise ValueError("params, grads and moment buffers differ in length")
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if not (p.shape == g.shape == m.shape == v.shape):
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moments {m.shape}/{v.shape}")
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / corr1
        v_hat = v / corr2
        p.data -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(p.dtype)
    return params


def stack_batch(clips: Sequence[ClipSample], dtype) -> tuple[Tensor, Tensor, np.ndarray]:
    rgb = Tensor._wrap(np.stack([c.rgb for c in clips]).astype(dtype))
    sem = Tensor._wrap(np.stack([c.semantic for c in clips]).astype(dtype))
    label = np.stack([c.label for c in clips]).astype(dtype)[:, None]
    return rgb, sem, label


def predict_batch(model, rgb: Tensor, sem: Tensor) -> Tensor:
    if model.fusion_mode == "vision_only":
        return model(rgb)
    return model(rgb, sem)


@dataclass
class TrainResult:
    trace: list[tuple[int, float, float, float]]
    state: AdamState

    def csv_lines(self) -> list[str]:
        return ["step,loss,kl,cc"] + [f"{s},{l!r},{k!r},{c!r}" for s, l, k, c in self.trace]


def steps_for(num_frames: int, cfg: TrainConfig) -> int:
    """Optimiser steps for ``cfg.epochs`` epochs.

    One epoch draws ``num_frames / clip_len`` clips, where ``num_frames``
    counts labelled frames (one clip per frame in :class:`ClipDataset`).
    """
    clips_per_epoch = max(1, num_frames // cfg.clip_len)
    return cfg.epochs * math.ceil(clips_per_epoch / cfg.batch_clips)


def train(model, dataset: Sequence[ClipSample], cfg: TrainConfig, steps: int | None = None,
          callback=None) -> TrainResult:
    """Sample batch, forward, mean loss, backward, Adam; repeat.

    ``dataset`` is any sequence of :class:`ClipSample`. Each step draws
    ``batch_clips`` indices uniformly (with replacement only when the dataset
    is smaller than a batch). Without ``steps`` the epoch count of ``cfg``
    decides the length.
    """
    n = len(dataset)
    if n == 0:
        raise ValueError("training dataset is empty")
    if steps is None:
        steps = steps_for(n, cfg)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = AdamState.for_params(params)
    model.train()
    trace = []
    for step in range(1, steps + 1):
        idx = rng.choice(n, size=cfg.batch_clips, replace=n < cfg.batch_clips)
        rgb, sem, label = stack_batch([dataset[int(i)] for i in idx], model.dtype)
        model.zero_grad()
        pred = predict_batch(model, rgb, sem)
        total, kl, cc = loss_terms(label, pred)
        total.backward()
        adam_step(params, [p.grad for p in params], state, cfg)
        row = (step, float(total.data), float(kl.data), float(cc.data))
        trace.append(row)
        if callback is not None:
            callback(row)
    return TrainResult(trace, state)
