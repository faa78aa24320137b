"""Domain types for depth super-resolution: depth maps, RGB guidance, validity
masks, degradation specifications, and the on-disk sample layout.

Depth is carried in meters. The validity rule follows the time-of-flight
convention: a ground-truth pixel is valid iff its depth lies in [0.1 m, 5 m].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .formats import read_pfm, read_pgm, read_ppm, write_pfm, write_pgm, write_ppm

DEPTH_MAX_M = 5.0  # normalization constant: depth / DEPTH_MAX_M enters the network
VALID_MIN_M = 0.1
VALID_MAX_M = 5.0


@dataclass(frozen=True)
class DepthMap:
    """Dense 2-D depth grid in meters. Invalid pixels are stored as 0."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 2:
            raise ValueError(f"depth map must be 2-D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("depth map contains non-finite values")
        if (arr < 0).any():
            raise ValueError("depth map contains negative values")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RgbImage:
    """3-channel guidance image, channels in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"rgb image must be HxWx3, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ValidMask:
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @staticmethod
    def from_depth(gt: DepthMap) -> "ValidMask":
        v = gt.values
        return ValidMask((v >= VALID_MIN_M) & (v <= VALID_MAX_M))


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float | None = None,
                    angle: float = 0.0) -> np.ndarray:
    """Normalized (an)isotropic Gaussian kernel with odd side `size`.

    `angle` rotates the principal axis counter-clockwise, in radians.
    """
    if size % 2 != 1 or size < 1:
        raise ValueError(f"kernel side must be odd and positive, got {size}")
    if sigma_y is None:
        sigma_y = sigma_x
    r = size // 2
    ys, xs = np.mgrid[-r:r + 1, -r:r + 1].astype(np.float64)
    c, s = math.cos(angle), math.sin(angle)
    u = c * xs + s * ys
    v = -s * xs + c * ys
    k = np.exp(-0.5 * ((u / sigma_x) ** 2 + (v / sigma_y) ** 2))
    return (k / k.sum()).astype(np.float64)


def delta_kernel(size: int = 1) -> np.ndarray:
    if size % 2 != 1:
        raise ValueError("kernel side must be odd")
    k = np.zeros((size, size))
    k[size // 2, size // 2] = 1.0
    return k


@dataclass(frozen=True)
class DegradationSpec:
    """Known degradation applied by the synthetic harness.

    blur_kernel: odd-sized, non-negative, sums to 1.
    noise_std is in normalized depth units (depth / DEPTH_MAX_M).
    hole_rate punches structural-distortion erasures into the LR depth.
    """

    blur_kernel: np.ndarray = field(default_factory=lambda: delta_kernel(1))
    scale_factor: int = 2
    noise_std: float = 0.0
    hole_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        k = np.asarray(self.blur_kernel, dtype=np.float64)
        if k.ndim != 2 or k.shape[0] != k.shape[1] or k.shape[0] % 2 != 1:
            raise ValueError(f"blur kernel must be square with odd side, got {k.shape}")
        if (k < 0).any():
            raise ValueError("blur kernel entries must be non-negative")
        if abs(k.sum() - 1.0) > 1e-9:
            raise ValueError(f"blur kernel must sum to 1, got {k.sum()!r}")
        if self.scale_factor < 1:
            raise ValueError("scale factor must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise std must be >= 0")
        if not (0.0 <= self.hole_rate < 1.0):
            raise ValueError("hole rate must lie in [0, 1)")
        object.__setattr__(self, "blur_kernel", k)

    def with_seed(self, seed: int) -> "DegradationSpec":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class SceneSample:
    hr_depth: DepthMap
    rgb: RgbImage
    lr_depth: DepthMap
    gt_mask: ValidMask
    gt_kernel: np.ndarray | None
    meta: DegradationSpec

    def __post_init__(self):
        s = self.meta.scale_factor
        if (self.hr_depth.height != s * self.lr_depth.height
                or self.hr_depth.width != s * self.lr_depth.width):
            raise ValueError("LR dims must be HR dims / scale factor exactly")
        if (self.rgb.height, self.rgb.width) != (self.hr_depth.height, self.hr_depth.width):
            raise ValueError("rgb dims must match HR depth dims")


def write_spec(spec: DegradationSpec, path) -> None:
    lines = [
        f"scale_factor={spec.scale_factor}",
        f"noise_std={spec.noise_std!r}",
        f"hole_rate={spec.hole_rate!r}",
        f"seed={spec.seed}",
        f"kernel {spec.blur_kernel.shape[0]}",
    ]
    for row in spec.blur_kernel:
        lines.append(" ".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_spec(path) -> DegradationSpec:
    lines = Path(path).read_text().strip().splitlines()
    kv = {}
    kernel = None
    it = iter(lines)
    for line in it:
        if line.startswith("kernel "):
            n = int(line.split()[1])
            rows = [[float(v) for v in next(it).split()] for _ in range(n)]
            kernel = np.array(rows)
        elif "=" in line:
            k, v = line.split("=", 1)
            kv[k.strip()] = v.strip()
    if kernel is None:
        raise ValueError(f"no kernel block in {path}")
    return DegradationSpec(
        blur_kernel=kernel,
        scale_factor=int(kv["scale_factor"]),
        noise_std=float(kv["noise_std"]),
        hole_rate=float(kv["hole_rate"]),
        seed=int(kv["seed"]),
    )


def save_sample(sample: SceneSample, root, split: str, index: int) -> None:
    d = Path(root) / split
    d.mkdir(parents=True, exist_ok=True)
    prefix = d / f"{index:05d}"
    write_pfm(sample.hr_depth.values, f"{prefix}_hr.pfm")
    write_pfm(sample.lr_depth.values, f"{prefix}_lr.pfm")
    write_ppm(sample.rgb.values, f"{prefix}_rgb.ppm")
    write_pgm(sample.gt_mask.values, f"{prefix}_mask.pgm")
    write_spec(sample.meta, f"{prefix}_spec.txt")


def load_sample(root, split: str, index: int) -> SceneSample:
    prefix = Path(root) / split / f"{index:05d}"
    missing = [p for p in (f"{prefix}_hr.pfm", f"{prefix}_lr.pfm", f"{prefix}_rgb.ppm",
                           f"{prefix}_mask.pgm", f"{prefix}_spec.txt")
               if not Path(p).exists()]
    if missing:
        raise FileNotFoundError(f"sample {index} incomplete, missing: {missing}")
    spec = read_spec(f"{prefix}_spec.txt")
    return SceneSample(
        hr_depth=DepthMap(read_pfm(f"{prefix}_hr.pfm")),
        rgb=RgbImage(read_ppm(f"{prefix}_rgb.ppm")),
        lr_depth=DepthMap(read_pfm(f"{prefix}_lr.pfm")),
        gt_mask=ValidMask(read_pgm(f"{prefix}_mask.pgm")),
        gt_kernel=spec.blur_kernel,
        meta=spec,
    )


def list_samples(root, split: str) -> list[int]:
    d = Path(root) / split
    if not d.is_dir():
        raise FileNotFoundError(f"no such split directory: {d}")
    return sorted(int(p.name.split("_")[0]) for p in d.glob("*_hr.pfm"))
