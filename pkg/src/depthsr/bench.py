"""Evaluation and reporting: valid-mask RMSE in centimeters, dataset
evaluation against the bicubic baseline, noise-robustness sweeps, ablation
runs, and kernel export for comparison with the known synthetic degradation.

CSV files are the authoritative outputs; plots are rendered from them
best-effort.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from .data import DEPTH_MAX_M, DegradationSpec, list_samples, load_sample
from .degradation import effective_kernel, kernel_set_mass
from .fusion import DepthSRNet, count_params
from .resize import bicubic_resize
from .synth import add_eval_noise, fill_holes
from .training import TrainConfig, train_loop


@dataclass(frozen=True)
class EvalReport:
    rmse_cm: float
    bicubic_rmse_cm: float
    n_samples: int
    params: int
    mean_latency_ms: float
    per_sample: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class SweepResult:
    blur_std: float
    points: tuple[tuple[float, float], ...]  # (noise_std, rmse_cm), stds increasing


def rmse_valid(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """sqrt(mean over valid pixels of squared error), meters -> centimeters."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    if pred.shape != gt.shape or m.shape != gt.shape:
        raise ValueError("pred, gt and mask must share dims")
    if not m.any():
        raise ValueError("mask has no valid pixels")
    return float(np.sqrt(((pred[m] - gt[m]) ** 2).mean()) * 100.0)


def predict(model: DepthSRNet | None, lr_m: np.ndarray, rgb: np.ndarray,
            s: int, d_up_m: np.ndarray | None = None) -> np.ndarray:
    """HR depth prediction in meters. model=None is the identity baseline
    (bicubic upsampling of the hole-filled LR depth)."""
    if d_up_m is None:
        d_up_m = bicubic_resize(fill_holes(lr_m), float(s))
    if model is None:
        return np.asarray(d_up_m, dtype=np.float32)
    lr_t = torch.tensor(fill_holes(lr_m) / DEPTH_MAX_M)[None, None]
    rgb_t = torch.tensor(np.moveaxis(rgb, 2, 0))[None]
    with torch.no_grad():
        pred = model(lr_t, rgb_t)["d_hr"]
    return (pred[0, 0].numpy() * DEPTH_MAX_M).astype(np.float32)


def eval_dataset(model: DepthSRNet | None, root, split: str = "test",
                 noise_std: float = 0.0, blur_std: float = 0.0) -> EvalReport:
    """Mean valid-mask RMSE over a dataset split, plus the bicubic baseline
    on the same samples. Optional evaluation noise is applied to the
    upsampled LR depth (post-upsampling protocol)."""
    indices = list_samples(root, split)
    if not indices:
        raise FileNotFoundError(f"no samples under {root}/{split}")
    per_sample, base_rmses, latencies = [], [], []
    for idx in indices:
        sample = load_sample(root, split, idx)
        s = sample.meta.scale_factor
        d_up = bicubic_resize(fill_holes(sample.lr_depth.values), float(s))
        if noise_std > 0 or blur_std > 0:
            d_up = add_eval_noise(d_up, noise_std, blur_std, seed=idx)
        # noisy protocol feeds the noisy upsampled map back as LR at s=1 scale
        t0 = time.perf_counter()
        if model is None:
            pred = d_up
        else:
            pred = _predict_from_up(model, d_up, sample.rgb.values)
        latencies.append((time.perf_counter() - t0) * 1000.0)
        gt = sample.hr_depth.values
        mask = sample.gt_mask.values
        per_sample.append((idx, rmse_valid(pred, gt, mask)))
        base_rmses.append(rmse_valid(d_up, gt, mask))
    rmse = float(np.mean([r for _, r in per_sample]))
    return EvalReport(
        rmse_cm=rmse,
        bicubic_rmse_cm=float(np.mean(base_rmses)),
        n_samples=len(indices),
        params=0 if model is None else count_params(model),
        mean_latency_ms=float(np.mean(latencies)),
        per_sample=tuple(per_sample),
    )


def _predict_from_up(model: DepthSRNet, d_up_m: np.ndarray, rgb: np.ndarray) -> np.ndarray:
    """Run the network on an already-upsampled (possibly noised) depth map by
    bypassing its internal bicubic step."""
    up_t = torch.tensor(np.asarray(d_up_m, dtype=np.float32) / DEPTH_MAX_M)[None, None]
    rgb_t = torch.tensor(np.moveaxis(rgb, 2, 0))[None]
    with torch.no_grad():
        pred = model(None, rgb_t, d_up=up_t)["d_hr"]
    return (pred[0, 0].numpy() * DEPTH_MAX_M).astype(np.float32)


DEFAULT_SWEEP_STDS = (0.04, 0.07, 0.10, 0.13, 0.16)
DEFAULT_SWEEP_BLUR = 3.6


def noise_sweep(model: DepthSRNet | None, root, split: str = "test",
                stds=DEFAULT_SWEEP_STDS, blur_std: float = DEFAULT_SWEEP_BLUR) -> SweepResult:
    stds = tuple(stds)
    if any(b <= a for a, b in zip(stds, stds[1:])):
        raise ValueError("noise stds must be strictly increasing")
    points = []
    for std in stds:
        rep = eval_dataset(model, root, split, noise_std=std, blur_std=blur_std)
        points.append((std, rep.rmse_cm))
    return SweepResult(blur_std=blur_std, points=tuple(points))


def sweep_csv(result: SweepResult) -> str:
    lines = ["noise_std,rmse_cm"]
    lines += [f"{std},{rmse:.6f}" for std, rmse in result.points]
    return "\n".join(lines) + "\n"


def eval_csv(report: EvalReport) -> str:
    lines = ["index,rmse_cm"]
    lines += [f"{idx},{rmse:.6f}" for idx, rmse in report.per_sample]
    return "\n".join(lines) + "\n"


def export_kernels(model: DepthSRNet, lr_m: np.ndarray, out_path=None):
    """Run routing + generation on one sample; returns (kernel blocks text,
    effective 9x9 kernel). Each block is `kernel <side> <weight>` followed by
    whitespace floats, row-major."""
    lr_t = torch.tensor(fill_holes(lr_m) / DEPTH_MAX_M)[None, None]
    with torch.no_grad():
        d_up = model.upsample(lr_t)
        _, code = model.encoder(d_up)
        indices, weights = model.router(d_up)
        kernels = model.kernel_sets(code, indices, weights)[0]
        eff = effective_kernel(kernels)
    lines = []
    for j, (_, k) in enumerate(kernels):
        lines.append(f"kernel {k.shape[-1]} {float(weights[0, j]):.8f}")
        for row in k.numpy():
            lines.append(" ".join(f"{v:.8e}" for v in row))
    lines.append(f"kernel {eff.shape[-1]} {kernel_set_mass(kernels):.8f}")
    for row in eff.numpy():
        lines.append(" ".join(f"{v:.8e}" for v in row))
    text = "\n".join(lines) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    return text, eff.numpy()


def mean_effective_kernel(model: DepthSRNet, root, split: str = "test",
                          limit: int | None = None) -> np.ndarray:
    """Average 9x9 effective learned kernel over a dataset split."""
    indices = list_samples(root, split)
    if limit:
        indices = indices[:limit]
    acc = None
    for idx in indices:
        sample = load_sample(root, split, idx)
        _, eff = export_kernels(model, sample.lr_depth.values)
        acc = eff if acc is None else acc + eff
    return acc / len(indices)


def measure_latency(model: DepthSRNet, lr_m: np.ndarray, rgb: np.ndarray,
                    warmups: int = 3, reps: int = 20) -> float:
    """Median wall-clock forward time in ms."""
    lr_t = torch.tensor(fill_holes(lr_m) / DEPTH_MAX_M)[None, None]
    rgb_t = torch.tensor(np.moveaxis(rgb, 2, 0))[None]
    with torch.no_grad():
        for _ in range(warmups):
            model(lr_t, rgb_t)
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            model(lr_t, rgb_t)
            times.append((time.perf_counter() - t0) * 1000.0)
    return float(np.median(times))


# ---------------------------------------------------------------------------
# ablation axes


def ablate_axis(axis: str, base_cfg: TrainConfig, root, split: str = "test"):
    """Train/evaluate along one ablation axis; yields (setting, rmse_cm, params)."""
    settings = _axis_settings(axis, base_cfg)
    rows = []
    for name, cfg in settings:
        model, _ = train_loop(cfg)
        rep = eval_dataset(model, root, split)
        rows.append((name, rep.rmse_cm, count_params(model)))
    return rows


def _axis_settings(axis: str, base: TrainConfig):
    if axis == "t_doft":
        return [(f"t{t}", replace(base, model=replace(base.model, t_doft=t)))
                for t in range(1, 9)]
    if axis == "loss":
        return [
            ("rec", replace(base, lambda_deg=0.0, lambda_cont=0.0)),
            ("rec+deg", replace(base, lambda_cont=0.0)),
            ("rec+cont", replace(base, lambda_deg=0.0)),
            ("all", base),
        ]
    if axis == "router":
        combos = [(g, 1) for g in range(1, 6)] + [(4, k) for k in range(1, 5)]
        seen, out = set(), []
        for g, k in combos:
            if (g, k) in seen:
                continue
            seen.add((g, k))
            out.append((f"g{g}k{k}", replace(base, model=replace(base.model, g=g, k=k))))
        return out
    raise ValueError(f"unknown ablation axis {axis!r} (want t_doft, loss, or router)")


def ablate_csv(rows) -> str:
    lines = ["setting,rmse_cm,params"]
    lines += [f"{name},{rmse:.6f},{params}" for name, rmse, params in rows]
    return "\n".join(lines) + "\n"
