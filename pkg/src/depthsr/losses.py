"""Training objective: masked L1 reconstruction, degradation consistency, and
a multi-scale contrastive term.

The latent extractor standing in for a pretrained network is fixed (no
parameters) but passes gradients: each pyramid level concatenates a
Gaussian-smoothed copy of the depth with its horizontal and vertical
gradients, at progressively halved resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .data import gaussian_kernel

CONTRAST_EPS = 1e-6


def default_contrast_alpha(m: int) -> list[float]:
    """Per-level contrastive weights 1/32, 1/16, 1/8, ... (deeper levels
    weighted more, shallow ones kept small). Uniform weights make the ratio
    term dominate, and its repulsive denominator then drags the generated
    kernels wider than the true degradation."""
    return [2.0 ** z / 32.0 for z in range(m)]


def _smooth_kernel(dtype, device):
    k = gaussian_kernel(5, 1.0)
    return torch.tensor(k, dtype=dtype, device=device).reshape(1, 1, 5, 5)


def _reflect_conv(x, kernel):
    ph, pw = kernel.shape[-2] // 2, kernel.shape[-1] // 2
    # reflect pads must stay below the input dim; iterate for tiny pyramid levels
    while ph > 0 or pw > 0:
        dh = min(ph, x.shape[-2] - 1)
        dw = min(pw, x.shape[-1] - 1)
        if dh == 0 and dw == 0:
            x = F.pad(x, (pw, pw, ph, ph), mode="replicate")
            ph = pw = 0
            break
        x = F.pad(x, (dw, dw, dh, dh), mode="reflect")
        ph -= dh
        pw -= dw
    return F.conv2d(x, kernel)


def extract_features(d: torch.Tensor, m: int = 3) -> list[torch.Tensor]:
    """Fixed latent pyramid of [B,3,H/2^(z-1),W/2^(z-1)] feature grids.

    Channels per level: Gaussian-smoothed depth, horizontal gradient,
    vertical gradient. Deterministic and differentiable w.r.t. d.
    """
    if m < 1:
        raise ValueError("need at least one pyramid level")
    smooth = _smooth_kernel(d.dtype, d.device)
    gx = torch.tensor([[-0.5, 0.0, 0.5]], dtype=d.dtype, device=d.device).reshape(1, 1, 1, 3)
    gy = gx.reshape(1, 1, 3, 1)
    levels = []
    x = d
    for z in range(m):
        if z > 0:
            x = F.avg_pool2d(x, 2)
        levels.append(torch.cat([_reflect_conv(x, smooth),
                                 _reflect_conv(x, gx),
                                 _reflect_conv(x, gy)], dim=1))
    return levels


def contrastive_loss(pos: list[torch.Tensor], anchor: list[torch.Tensor],
                     neg: list[torch.Tensor],
                     alpha: list[float] | None = None) -> torch.Tensor:
    """Sum over levels of alpha_z * meanL1(pos - anchor) / (meanL1(neg - anchor) + eps).

    Pulls the anchor (re-degraded depth) toward the positive (upsampled LR)
    and away from the negative (predicted HR).
    """
    if not (len(pos) == len(anchor) == len(neg)):
        raise ValueError("pyramids must have the same number of levels")
    if alpha is None:
        alpha = default_contrast_alpha(len(pos))
    if len(alpha) != len(pos) or any(a <= 0 for a in alpha):
        raise ValueError("alpha must have one positive weight per level")
    loss = None
    for a, p, an, n in zip(alpha, pos, anchor, neg):
        if p.shape != an.shape or n.shape != an.shape:
            raise ValueError("pyramid level shapes differ")
        term = a * (p - an).abs().mean() / ((n - an).abs().mean() + CONTRAST_EPS)
        loss = term if loss is None else loss + term
    return loss


def degradation_loss(d_up: torch.Tensor, d_d: torch.Tensor) -> torch.Tensor:
    """Mean absolute difference between the upsampled LR depth and the
    re-degraded prediction, averaged over the batch."""
    if d_up.shape != d_d.shape:
        raise ValueError(f"shape mismatch {tuple(d_up.shape)} vs {tuple(d_d.shape)}")
    return (d_up - d_d).abs().mean()


def reconstruction_loss(d_gt: torch.Tensor, d_hr: torch.Tensor,
                        mask: torch.Tensor) -> torch.Tensor:
    """Mean absolute error over valid pixels only."""
    if d_gt.shape != d_hr.shape or mask.shape != d_gt.shape:
        raise ValueError("depth maps and mask must share dims")
    m = mask.to(torch.bool)
    n = m.sum()
    if n == 0:
        raise ValueError("mask has no valid pixels")
    return ((d_gt - d_hr).abs() * m.to(d_gt.dtype)).sum() / n.to(d_gt.dtype)


@dataclass(frozen=True)
class LossReport:
    l_rec: float
    l_deg: float
    l_cont: float
    lambda_deg: float
    lambda_cont: float

    @property
    def l_total(self) -> float:
        return self.l_rec + self.lambda_deg * self.l_deg + self.lambda_cont * self.l_cont


def total_loss(l_rec: torch.Tensor, l_deg: torch.Tensor, l_cont: torch.Tensor,
               lambda_deg: float = 0.1, lambda_cont: float = 0.1) -> torch.Tensor:
    if lambda_deg < 0 or lambda_cont < 0:
        raise ValueError("loss weights must be non-negative")
    return l_rec + lambda_deg * l_deg + lambda_cont * l_cont
