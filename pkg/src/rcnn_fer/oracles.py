"""Slow, loop-based reference implementations used to cross-check the
vectorized primitives. Nothing here shares code with :mod:`rcnn_fer.tensor`.
"""
from __future__ import annotations

import math

import numpy as np


def conv2d_loops(x, kernels, stride=1):
    """Valid cross-correlation of H x W x C with Kh x Kw x C x F by explicit loops."""
    h, w, c = x.shape
    kh, kw, _, f = kernels.shape
    ho = (h - kh) // stride + 1
    wo = (w - kw) // stride + 1
    out = np.zeros((ho, wo, f))
    for oi in range(ho):
        for oj in range(wo):
            for ff in range(f):
                acc = 0.0
                for i in range(kh):
                    for j in range(kw):
                        for cc in range(c):
                            acc += x[oi * stride + i, oj * stride + j, cc] * kernels[i, j, cc, ff]
                out[oi, oj, ff] = acc
    return out


def max_pool_loops(x, window=2):
    h, w, c = x.shape
    out = np.zeros((h // window, w // window, c))
    for i in range(h // window):
        for j in range(w // window):
            for cc in range(c):
                best = -math.inf
                for di in range(window):
                    for dj in range(window):
                        best = max(best, x[i * window + di, j * window + dj, cc])
                out[i, j, cc] = best
    return out


def batch_norm_two_pass(x, gamma, beta, eps=1e-5):
    """Train-mode batch norm with per-channel mean then variance in two passes."""
    flat = x.reshape(-1, x.shape[-1])
    m, c = flat.shape
    out = np.empty_like(flat)
    for cc in range(c):
        mean = math.fsum(flat[:, cc]) / m
        var = math.fsum((v - mean) ** 2 for v in flat[:, cc]) / m
        for r in range(m):
            out[r, cc] = (flat[r, cc] - mean) / math.sqrt(var + eps) * gamma[cc] + beta[cc]
    return out.reshape(x.shape)


def dense_sum(x, weights, bias):
    n, m = weights.shape
    return np.array([math.fsum(x[i] * weights[i, j] for i in range(n)) + bias[j] for j in range(m)])


def central_difference(f, param, h=1e-5, indices=None):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. entries of ``param``.

    ``param`` is perturbed in place and restored. With ``indices`` only those
    flat positions are estimated.
    """
    flat = param.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    est = {}
    for k in positions:
        orig = flat[k]
        flat[k] = orig + h
        up = f()
        flat[k] = orig - h
        down = f()
        flat[k] = orig
        est[k] = (up - down) / (2 * h)
    return est


def relative_error(analytic, numeric, floor=1e-6):
    """|a - n| / max(|a|, |n|, floor); the floor keeps vanishing gradients from
    turning round-off into huge ratios."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def bilinear_point(img, y, x):
    """Bilinear sample of a 2-D array at fractional (y, x) by the closed formula."""
    h, w = img.shape
    y0, x0 = int(math.floor(y)), int(math.floor(x))
    y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
    dy, dx = y - y0, x - x0
    return ((1 - dy) * (1 - dx) * img[y0, x0] + (1 - dy) * dx * img[y0, x1]
            + dy * (1 - dx) * img[y1, x0] + dy * dx * img[y1, x1])
