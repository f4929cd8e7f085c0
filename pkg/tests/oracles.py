"""Deliberately naive reference implementations used as test oracles.

Nothing here imports the package's numeric code: every function works on
plain Python scalars or elementwise numpy indexing so that an error in the
vectorised implementation cannot be mirrored here.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


# ------------------------------------------------------------------ conv
def conv_loop(x, w, b=None, stride=None, pad=None):
    """Cross-correlation by explicit loops over every output element and tap."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    nd = w.ndim - 2
    stride = stride or (1,) * nd
    pad = pad or (1,) * nd
    n, c = x.shape[:2]
    k = w.shape[0]
    ks = w.shape[2:]
    sp = x.shape[2:]
    out = tuple((sp[i] + 2 * pad[i] - ks[i]) // stride[i] + 1 for i in range(nd))
    y = np.zeros((n, k) + out)
    for ni in range(n):
        for ki in range(k):
            for o in itertools.product(*(range(m) for m in out)):
                acc = 0.0 if b is None else float(b[ki])
                for ci in range(c):
                    for tap in itertools.product(*(range(m) for m in ks)):
                        pos = [o[i] * stride[i] + tap[i] - pad[i] for i in range(nd)]
                        if all(0 <= pos[i] < sp[i] for i in range(nd)):
                            acc += float(x[(ni, ci) + tuple(pos)]) * float(w[(ki, ci) + tap])
                y[(ni, ki) + o] = acc
    return y


# -------------------------------------------------------------- convLSTM
def _sigmoid(a: float) -> float:
    return 1.0 / (1.0 + math.exp(-a))


def convlstm_scalar(z, h, c, wz, wh, bz, bh):
    """One convLSTM step with scalar loops.

    ``wz[g]``, ``wh[g]``, ``bz[g]``, ``bh[g]`` are the kernels of gate
    ``g`` in ``"ifgo"``. Gate pre-activations are
    ``W_z * Z + W_h * H + b_z + b_h``; then
    ``C' = f C + i g`` and ``H' = o tanh(C')``.
    """
    n, cin, hh, ww = z.shape
    hid = h.shape[1]
    pre = {}
    for g in "ifgo":
        a = np.zeros((n, hid, hh, ww))
        for ni, k, r, col in itertools.product(range(n), range(hid), range(hh), range(ww)):
            acc = float(bz[g][k]) + float(bh[g][k])
            for dy in range(3):
                for dx in range(3):
                    rr, cc = r + dy - 1, col + dx - 1
                    if 0 <= rr < hh and 0 <= cc < ww:
                        for ci in range(cin):
                            acc += float(wz[g][k, ci, dy, dx]) * float(z[ni, ci, rr, cc])
                        for ci in range(hid):
                            acc += float(wh[g][k, ci, dy, dx]) * float(h[ni, ci, rr, cc])
            a[ni, k, r, col] = acc
        pre[g] = a
    c_new = np.zeros_like(c, dtype=np.float64)
    h_new = np.zeros_like(h, dtype=np.float64)
    for idx in np.ndindex(*c.shape):
        i = _sigmoid(pre["i"][idx])
        f = _sigmoid(pre["f"][idx])
        gg = math.tanh(pre["g"][idx])
        o = _sigmoid(pre["o"][idx])
        c_new[idx] = f * float(c[idx]) + i * gg
        h_new[idx] = o * math.tanh(c_new[idx])
    return h_new, c_new


# --------------------------------------------------------------- metrics
def _pixels(m):
    m = np.asarray(m, dtype=np.float64)
    return [float(v) for v in m.ravel()]


def kl_brute(gt, pred, eps=1e-7):
    p, q = _pixels(gt), _pixels(pred)
    sp, sq = sum(p), sum(q)
    return sum((pi / sp) * math.log(eps + (pi / sp) / (eps + qi / sq)) for pi, qi in zip(p, q))


def cc_two_pass(a, b):
    xa, xb = _pixels(a), _pixels(b)
    n = len(xa)
    ma, mb = sum(xa) / n, sum(xb) / n
    cov = sum((u - ma) * (v - mb) for u, v in zip(xa, xb))
    va = sum((u - ma) ** 2 for u in xa)
    vb = sum((v - mb) ** 2 for v in xb)
    return cov / math.sqrt(va * vb)


def sim_brute(a, b):
    xa, xb = _pixels(a), _pixels(b)
    sa, sb = sum(xa), sum(xb)
    return sum(min(u / sa, v / sb) for u, v in zip(xa, xb))


def nss_brute(points, pred):
    x = _pixels(pred)
    n = len(x)
    mean = sum(x) / n
    std = math.sqrt(sum((v - mean) ** 2 for v in x) / n)
    if std == 0:
        return 0.0
    m = np.asarray(pred, dtype=np.float64)
    return sum((float(m[y, xx]) - mean) / std for xx, y in points) / len(points)


def auc_sweep(pos, neg):
    """ROC area by counting, for each distinct positive value, every sample at or above it."""
    pos = [float(v) for v in pos]
    neg = [float(v) for v in neg]
    xs, ys = [0.0], [0.0]
    for t in sorted(set(pos), reverse=True):
        ys.append(sum(1 for v in pos if v >= t) / len(pos))
        xs.append(sum(1 for v in neg if v >= t) / len(neg))
    xs.append(1.0)
    ys.append(1.0)
    return math.fsum((xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]) / 2.0 for i in range(1, len(xs)))


def auc_judd_brute(points, pred):
    m = np.asarray(pred, dtype=np.float64)
    fixed = set(points)
    pos = [m[y, x] for x, y in points]
    neg = [m[r, c] for r in range(m.shape[0]) for c in range(m.shape[1]) if (c, r) not in fixed]
    return auc_sweep(pos, neg)


# ---------------------------------------------------------- fixations
def local_maxima_brute(m):
    """Flood-fill every equal-valued plateau; keep those with no larger neighbour.

    Each surviving plateau is reported at its first pixel in raster order.
    """
    m = np.asarray(m, dtype=np.float64)
    h, w = m.shape
    seen = set()
    found = []
    for r in range(h):
        for c in range(w):
            if (r, c) in seen or m[r, c] <= 0:
                continue
            v = m[r, c]
            region, stack, is_peak = [], [(r, c)], True
            seen.add((r, c))
            while stack:
                pr, pc = stack.pop()
                region.append((pr, pc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        rr, cc = pr + dr, pc + dc
                        if (dr, dc) == (0, 0) or not (0 <= rr < h and 0 <= cc < w):
                            continue
                        if m[rr, cc] > v:
                            is_peak = False
                        elif m[rr, cc] == v and (rr, cc) not in seen:
                            seen.add((rr, cc))
                            stack.append((rr, cc))
            if is_peak:
                top = min(region)
                found.append((top[1], top[0]))
    return found


# --------------------------------------------------------- model size
def expected_parameter_count(channels, hidden, decoder, fusion_mode, rgb_in=3, sem_in=1):
    """Sum of weight and bias sizes from the architecture description alone."""
    def path(cin):
        total, prev = 0, cin
        for i, width in enumerate(channels):
            total += width * prev * 27 + width  # conv3d weight + bias
            prev = width
            if i != len(channels) - 1:
                total += 2 * width  # BN gamma + beta (every conv but the last)
        return total

    def cell(cin):
        return 4 * (hidden * cin * 9 + hidden * hidden * 9 + 2 * hidden)

    w1, w2 = decoder
    dec = (w1 * hidden * 9 + w1) + 2 * w1 + (w2 * w1 * 9 + w2) + 2 * w2 + (w2 * 9 + 1)
    total = path(rgb_in) + dec
    if fusion_mode != "vision_only":
        total += path(sem_in)
    total += cell(channels[-1]) * (2 if fusion_mode == "late" else 1)
    return total
