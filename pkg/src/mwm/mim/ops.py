"""Numeric building blocks with hand-written backward passes.

Tensors are numpy arrays shaped (channels, height, width). Every forward
returns (output, cache); the matching backward consumes the upstream
gradient plus the cache and returns gradients for all inputs. Dtype
follows the inputs, so the same code runs in float32 for training and
float64 for finite-difference validation.
"""
from __future__ import annotations

import numpy as np


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    c = xp.shape[0]
    cols = np.empty((c, kh, kw, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xp[:, i : i + stride * ho : stride, j : j + stride * wo : stride]
    return cols.reshape(c * kh * kw, ho * wo)


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, pad: int = 0):
    """Cross-correlation: x (Cin,H,W), w (Cout,Cin,kh,kw), b (Cout,)."""
    cout, cin, kh, kw = w.shape
    _, h, win = x.shape
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (win + 2 * pad - kw) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    y = (w.reshape(cout, -1) @ cols + b[:, None]).reshape(cout, ho, wo)
    cache = (cols, xp.shape, w, stride, pad, (ho, wo))
    return y, cache


def conv2d_backward(dy: np.ndarray, cache):
    cols, xp_shape, w, stride, pad, (ho, wo) = cache
    cout, cin, kh, kw = w.shape
    dym = dy.reshape(cout, -1)
    dw = (dym @ cols.T).reshape(w.shape)
    db = dym.sum(axis=1)
    dcols = (w.reshape(cout, -1).T @ dym).reshape(cin, kh, kw, ho, wo)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[:, i, j]
    if pad:
        dx = dxp[:, pad:-pad, pad:-pad]
    else:
        dx = dxp
    return dx, dw, db


def leaky(x: np.ndarray, slope: float):
    y = np.where(x >= 0, x, slope * x)
    return y, (x >= 0, slope)


def leaky_backward(dy: np.ndarray, cache):
    nonneg, slope = cache
    return np.where(nonneg, dy, slope * dy)


def upsample2(x: np.ndarray) -> np.ndarray:
    """Nearest-neighbor 2x upsampling on the spatial axes."""
    return np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)


def upsample2_backward(dy: np.ndarray) -> np.ndarray:
    c, h, w = dy.shape
    return dy.reshape(c, h // 2, 2, w // 2, 2).sum(axis=(2, 4))


def mask_cells(x: np.ndarray, vis: np.ndarray) -> np.ndarray:
    """Zero feature cells whose visibility bit is 0; vis shape (H, W)."""
    return x * vis[None, :, :]


def mask_cells_backward(dy: np.ndarray, vis: np.ndarray) -> np.ndarray:
    return dy * vis[None, :, :]


def densify(x: np.ndarray, vis: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Visible cells keep their features; masked cells take the embedding m
    (one value per channel, broadcast across the cell)."""
    v = vis[None, :, :]
    return x * v + m[:, None, None] * (1 - v)


def densify_backward(dy: np.ndarray, vis: np.ndarray):
    v = vis[None, :, :]
    dx = dy * v
    dm = (dy * (1 - v)).sum(axis=(1, 2))
    return dx, dm
