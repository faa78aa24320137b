"""Synthetic RGB-D scene generation and known degradation operators.

Scenes are piecewise-planar: random rectangles and ellipses over a sloped
background, depths in [0.5 m, 4.5 m]. The RGB guidance shares its region
edges with the depth discontinuities and carries texture that is
uncorrelated with depth. The LR depth is produced by a *known* blur kernel,
stride-s subsampling, additive Gaussian noise and punched holes, so the
blind estimator can be verified against ground truth.

Everything here is a pure function of (seed, parameters).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from scipy import ndimage

from .data import (DEPTH_MAX_M, DegradationSpec, DepthMap, RgbImage, SceneSample,
                   ValidMask)
from .resize import bicubic_resize


def degrade_depth(hr: np.ndarray, spec: DegradationSpec,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply the known degradation: correlate with the blur kernel (mirror
    borders), subsample by stride s at phase (s-1)//2, add noise, punch holes."""
    s = spec.scale_factor
    blurred = ndimage.correlate(np.asarray(hr, dtype=np.float64),
                                spec.blur_kernel, mode="mirror")
    off = (s - 1) // 2
    lr = blurred[off::s, off::s].copy()
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if spec.noise_std > 0:
        lr += rng.normal(0.0, spec.noise_std * DEPTH_MAX_M, size=lr.shape)
    if spec.hole_rate > 0:
        lr[rng.random(lr.shape) < spec.hole_rate] = 0.0
    return np.clip(lr, 0.0, None).astype(np.float32)


def _texture(rng: np.random.Generator, h: int, w: int, cells: int = 4) -> np.ndarray:
    coarse = rng.standard_normal((max(2, h // (cells * 4) + 2),
                                  max(2, w // (cells * 4) + 2)))
    up = bicubic_resize(coarse, max(h, w) / min(coarse.shape) * 1.5)
    return up[:h, :w]


def synth_scene(seed: int, hr_size: int, s: int, spec: DegradationSpec) -> SceneSample:
    """Generate one deterministic RGB-D sample degraded by `spec`.

    `spec.scale_factor` is overridden by `s`; `hr_size` must be divisible by s.
    """
    if hr_size % s != 0:
        raise ValueError(f"hr_size {hr_size} not divisible by scale {s}")
    spec = replace(spec, scale_factor=s, seed=seed)
    rng = np.random.default_rng(seed)

    ys, xs = np.mgrid[0:hr_size, 0:hr_size] / float(hr_size)
    base = rng.uniform(2.0, 3.5)
    depth = base + rng.uniform(-0.8, 0.8) * xs + rng.uniform(-0.8, 0.8) * ys
    color = np.empty((hr_size, hr_size, 3), dtype=np.float64)
    color[:] = rng.uniform(0.2, 0.8, size=3)

    n_shapes = rng.integers(3, 7)
    for _ in range(n_shapes):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        ry, rx = rng.uniform(0.06, 0.25, size=2)
        d0 = rng.uniform(0.6, 4.3)
        slope = rng.uniform(-0.5, 0.5, size=2)
        shape_depth = d0 + slope[0] * (xs - cx) + slope[1] * (ys - cy)
        if rng.random() < 0.5:
            mask = (np.abs(ys - cy) < ry) & (np.abs(xs - cx) < rx)
        else:
            mask = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 < 1.0
        depth = np.where(mask, shape_depth, depth)
        color = np.where(mask[..., None], rng.uniform(0.1, 0.9, size=3), color)

    depth = np.clip(depth, 0.5, 4.5)
    # texture decorrelated from depth (fresh draws, no dependence on geometry)
    for c in range(3):
        color[..., c] += 0.12 * _texture(rng, hr_size, hr_size)
    color = np.clip(color, 0.0, 1.0)

    lr = degrade_depth(depth, spec, rng=np.random.default_rng(seed + 1))
    hr_map = DepthMap(depth.astype(np.float32))
    return SceneSample(
        hr_depth=hr_map,
        rgb=RgbImage(color.astype(np.float32)),
        lr_depth=DepthMap(lr),
        gt_mask=ValidMask.from_depth(hr_map),
        gt_kernel=spec.blur_kernel,
        meta=spec,
    )


def fill_holes(lr: np.ndarray) -> np.ndarray:
    """Replace zero (invalid) pixels with their nearest valid neighbor."""
    arr = np.asarray(lr, dtype=np.float32)
    invalid = arr <= 0.0
    if not invalid.any():
        return arr.copy()
    if invalid.all():
        raise ValueError("cannot fill a fully-invalid depth map")
    idx = ndimage.distance_transform_edt(invalid, return_distances=False,
                                         return_indices=True)
    return arr[tuple(idx)]


def add_eval_noise(d_up: np.ndarray, noise_std: float, blur_std: float,
                   seed: int = 0) -> np.ndarray:
    """Noise protocol for robustness evaluation, applied to *upsampled* LR depth:
    Gaussian blur then additive Gaussian noise, both in normalized depth units."""
    if noise_std < 0 or blur_std < 0:
        raise ValueError("noise and blur stds must be non-negative")
    x = np.asarray(d_up, dtype=np.float64) / DEPTH_MAX_M
    if blur_std > 0:
        x = ndimage.gaussian_filter(x, blur_std, mode="mirror")
    if noise_std > 0:
        x = x + np.random.default_rng(seed).normal(0.0, noise_std, size=x.shape)
    return np.clip(x * DEPTH_MAX_M, 0.0, None).astype(np.float32)


def upsampled_input(sample: SceneSample) -> np.ndarray:
    """Hole-filled, bicubically upsampled LR depth (meters) as the network sees it."""
    filled = fill_holes(sample.lr_depth.values)
    return bicubic_resize(filled, float(sample.meta.scale_factor))
