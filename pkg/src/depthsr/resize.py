"""Bicubic resampling (Catmull-Rom, a = -0.5) with reflect border handling.

Coordinate convention: output pixel centers map to input coordinates via
src = (dst + 0.5) / factor - 0.5 (the usual align_corners=False mapping).
Border indices reflect without repeating the edge sample (..., 2, 1 | 0, 1, 2, ...).
"""

from __future__ import annotations

import numpy as np

_A = -0.5  # Catmull-Rom


def cubic_weight(x: np.ndarray | float) -> np.ndarray:
    """Keys cubic kernel with a = -0.5, support [-2, 2]."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    w = np.zeros_like(x)
    m1 = x <= 1
    m2 = (x > 1) & (x < 2)
    w[m1] = (_A + 2) * x[m1] ** 3 - (_A + 3) * x[m1] ** 2 + 1
    w[m2] = _A * x[m2] ** 3 - 5 * _A * x[m2] ** 2 + 8 * _A * x[m2] - 4 * _A
    return w


def reflect_index(i: np.ndarray, n: int) -> np.ndarray:
    """Mirror indices into [0, n): -1 -> 1, n -> n-2."""
    if n == 1:
        return np.zeros_like(i)
    period = 2 * (n - 1)
    i = np.abs(i) % period
    return np.where(i >= n, period - i, i)


def _axis_weights(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    # returns (indices [n_out, 4], weights [n_out, 4])
    factor = n_out / n_in
    dst = np.arange(n_out, dtype=np.float64)
    src = (dst + 0.5) / factor - 0.5
    base = np.floor(src).astype(np.int64)
    taps = base[:, None] + np.arange(-1, 3)[None, :]
    w = cubic_weight(src[:, None] - taps)
    w /= w.sum(axis=1, keepdims=True)  # guard tiny numeric drift
    return reflect_index(taps, n_in), w


def bicubic_resize(values: np.ndarray, factor: float) -> np.ndarray:
    """Resize a 2-D (or HxWxC) array by a positive rational factor."""
    if factor <= 0:
        raise ValueError("factor must be positive")
    arr = np.asarray(values, dtype=np.float64)
    h, w = arr.shape[:2]
    out_h = int(round(h * factor))
    out_w = int(round(w * factor))
    if out_h < 1 or out_w < 1:
        raise ValueError(f"output dims {out_h}x{out_w} too small")
    iy, wy = _axis_weights(h, out_h)
    ix, wx = _axis_weights(w, out_w)
    # separable: rows then columns; arr[iy] is [out_h, 4, w, ...]
    if arr.ndim == 3:
        tmp = (arr[iy] * wy[:, :, None, None]).sum(axis=1)
        tmp = tmp[:, ix]  # [out_h, out_w, 4, C]
        out = (tmp * wx[None, :, :, None]).sum(axis=2)
    else:
        tmp = (arr[iy] * wy[:, :, None]).sum(axis=1)
        tmp = tmp[:, ix]  # [out_h, out_w, 4]
        out = (tmp * wx[None, :, :]).sum(axis=2)
    in_dtype = np.asarray(values).dtype
    return out.astype(in_dtype) if in_dtype.kind == "f" else out
