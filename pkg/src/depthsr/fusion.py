"""Degradation-oriented RGB-D fusion backbone.

Depth and RGB stems feed a recursive fusion block in which the spatial
degradation map steers per-pixel deformable sampling (offsets + modulation),
the global degradation code generates the deformable-convolution weights,
and a sigmoid affinity gate decides how much transformed RGB content enters
the depth stream. The head predicts a correction on top of the bicubically
upsampled depth, so a zero-initialized head reproduces the bicubic baseline
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .degradation import (ConfigError, DegradationEncoder, KernelGenerators,
                          ResidualBlock, Router)
from .resize import bicubic_resize

_TINY_RATIO = 3.0 / 8.0


def _tiny_width(w: int) -> int:
    # nearest even integer, minimum 2
    return max(2, int(round(w * _TINY_RATIO / 2.0)) * 2)


@dataclass(frozen=True)
class ModelConfig:
    c_feat: int = 32
    c_dmap: int = 16
    c_code: int = 64
    t_doft: int = 5
    g: int = 4
    k: int = 3
    s: int = 2
    tiny: bool = False

    def __post_init__(self):
        if self.t_doft < 1:
            raise ConfigError("t_doft must be >= 1")
        if min(self.c_feat, self.c_dmap, self.c_code) < 2:
            raise ConfigError("channel widths must be >= 2")
        if not (1 <= self.k <= self.g):
            raise ConfigError(f"need 1 <= k <= g, got k={self.k}, g={self.g}")

    @property
    def widths(self) -> tuple[int, int, int]:
        """(c_feat, c_dmap, c_code) after optional tiny scaling."""
        if self.tiny:
            return (_tiny_width(self.c_feat), _tiny_width(self.c_dmap),
                    _tiny_width(self.c_code))
        return (self.c_feat, self.c_dmap, self.c_code)

    def to_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in vars(self).items()) + "\n"

    @staticmethod
    def from_text(text: str) -> "ModelConfig":
        kv = dict(line.split("=", 1) for line in text.strip().splitlines())
        return ModelConfig(
            c_feat=int(kv["c_feat"]), c_dmap=int(kv["c_dmap"]),
            c_code=int(kv["c_code"]), t_doft=int(kv["t_doft"]),
            g=int(kv["g"]), k=int(kv["k"]), s=int(kv["s"]),
            tiny=kv["tiny"] == "True",
        )


def deform_conv(feat: torch.Tensor, offsets: torch.Tensor,
                modulation: torch.Tensor, weights: torch.Tensor) -> torch.Tensor:
    """Modulated deformable 3x3 convolution.

    feat: [B, C_in, H, W]; offsets: [B, 18, H, W] laid out as (dy, dx) pairs
    per tap, taps in row-major kernel order; modulation: [B, 9, H, W] in [0,1];
    weights: [B, 9, C_in, C_out]. Each tap samples at base-grid + offset via
    bilinear interpolation; positions outside the image read 0.
    """
    b, c_in, h, w = feat.shape
    if offsets.shape != (b, 18, h, w):
        raise ValueError(f"offsets shape {tuple(offsets.shape)} != {(b, 18, h, w)}")
    if modulation.shape != (b, 9, h, w):
        raise ValueError(f"modulation shape {tuple(modulation.shape)} != {(b, 9, h, w)}")
    if weights.shape[:3] != (b, 9, c_in):
        raise ValueError(f"weights shape {tuple(weights.shape)} incompatible")

    if h < 2 or w < 2:
        raise ValueError("deform_conv needs spatial dims >= 2")
    device, dtype = feat.device, feat.dtype
    ys = torch.arange(h, device=device, dtype=dtype)
    xs = torch.arange(w, device=device, dtype=dtype)
    base_y, base_x = torch.meshgrid(ys, xs, indexing="ij")
    taps_dy = torch.tensor([-1, -1, -1, 0, 0, 0, 1, 1, 1], device=device, dtype=dtype)
    taps_dx = torch.tensor([-1, 0, 1, -1, 0, 1, -1, 0, 1], device=device, dtype=dtype)

    off = offsets.reshape(b, 9, 2, h, w)
    py = base_y + taps_dy.reshape(1, 9, 1, 1) + off[:, :, 0]  # [B,9,H,W]
    px = base_x + taps_dx.reshape(1, 9, 1, 1) + off[:, :, 1]

    # bilinear sampling with zeros outside; taps stacked along the height axis
    gy = 2 * py / (h - 1) - 1
    gx = 2 * px / (w - 1) - 1
    grid = torch.stack([gx, gy], dim=-1).reshape(b, 9 * h, w, 2)
    sampled = F.grid_sample(feat, grid, mode="bilinear", padding_mode="zeros",
                            align_corners=True).reshape(b, c_in, 9, h, w)
    sampled = sampled * modulation.unsqueeze(1)
    return torch.einsum("bcthw,btcd->bdhw", sampled, weights)


class ChannelAttention(nn.Module):
    """Squeeze-excite: global pool -> 2-layer MLP -> sigmoid per-channel scale."""

    def __init__(self, channels, reduction=4):
        super().__init__()
        hidden = max(2, channels // reduction)
        self.mlp = nn.Sequential(nn.Linear(channels, hidden), nn.ReLU(),
                                 nn.Linear(hidden, channels))

    def scales(self, x):
        return torch.sigmoid(self.mlp(x.mean(dim=(2, 3))))

    def forward(self, x):
        return x * self.scales(x).unsqueeze(-1).unsqueeze(-1)


class ResidualGroup(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.blocks = nn.Sequential(ResidualBlock(channels), ResidualBlock(channels))
        self.attn = ChannelAttention(channels)
        self.tail = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.tail(self.attn(self.blocks(x)))


class Doft(nn.Module):
    """One degradation-oriented feature transformation step."""

    def __init__(self, c_feat, c_dmap, c_code, mlp_hidden=64):
        super().__init__()
        self.c_feat = c_feat
        self.offset_head = nn.Conv2d(c_dmap, 18, 3, padding=1)
        self.mod_head = nn.Conv2d(c_dmap, 9, 3, padding=1)
        self.weight_mlp = nn.Sequential(
            nn.Linear(c_code, mlp_hidden), nn.ReLU(),
            nn.Linear(mlp_hidden, 9 * c_feat * c_feat),
        )
        self.rgb_group = ResidualGroup(c_feat)
        self.affinity_head = nn.Conv2d(c_dmap, c_feat, 3, padding=1)
        self.rd_conv = nn.Conv2d(c_feat, c_feat, 3, padding=1)
        self.fuse = nn.Conv2d(2 * c_feat, c_feat, 3, padding=1)
        # small offsets at init keep sampling near the base grid
        nn.init.zeros_(self.offset_head.weight)
        nn.init.zeros_(self.offset_head.bias)

    def forward(self, dmap, code, f_d, f_r):
        b = f_d.shape[0]
        f_r2 = self.rgb_group(f_r)
        offsets = self.offset_head(dmap)
        modulation = torch.sigmoid(self.mod_head(dmap))
        weights = self.weight_mlp(code).reshape(b, 9, self.c_feat, self.c_feat)
        f_rd = deform_conv(f_r2, offsets, modulation, weights) + f_r2
        affinity = torch.sigmoid(self.affinity_head(dmap))
        f_d_new = self.fuse(torch.cat([f_d, affinity * self.rd_conv(f_rd) + f_rd], dim=1))
        return f_d_new, f_r2


class DepthSRNet(nn.Module):
    """Full blind depth SR model.

    forward consumes *normalized* depth (divided by the dataset max) and RGB
    in [0,1]; the upsampled depth is added back at the head, so the network
    learns a correction on top of bicubic.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c_feat, c_dmap, c_code = cfg.widths
        self.encoder = DegradationEncoder(c_dmap, c_code)
        self.router = Router(cfg.g, cfg.k)
        self.generators = KernelGenerators(c_code, cfg.g)
        self.depth_stem = nn.Conv2d(1, c_feat, 3, padding=1)
        self.rgb_stem = nn.Conv2d(3, c_feat, 3, padding=1)
        self.doft = Doft(c_feat, c_dmap, c_code)
        self.head_inner = nn.Conv2d(c_feat, c_feat, 3, padding=1)
        self.head_outer = nn.Conv2d(c_feat, 1, 3, padding=1)
        # zero correction at init: output == bicubic upsampling
        nn.init.zeros_(self.head_outer.weight)
        nn.init.zeros_(self.head_outer.bias)

    def upsample(self, lr: torch.Tensor) -> torch.Tensor:
        """Bicubic upsampling of [B,1,h,w] by the configured scale factor."""
        if self.cfg.s == 1:
            return lr.clone()
        arr = lr.detach().cpu().numpy()
        up = np.stack([bicubic_resize(a[0].astype(np.float64), float(self.cfg.s))
                       for a in arr])
        return torch.from_numpy(up[:, None]).to(lr.device, lr.dtype)

    def forward(self, lr: torch.Tensor | None, rgb: torch.Tensor,
                d_up: torch.Tensor | None = None):
        """lr: [B,1,h,w]; rgb: [B,3,s*h,s*w]. Passing a precomputed `d_up`
        (already at HR resolution) skips the internal bicubic step, which is
        how externally-noised inputs enter at evaluation time."""
        if d_up is None:
            if lr is None:
                raise ValueError("need lr or d_up")
            b, _, h, w = lr.shape
            sh, sw = h * self.cfg.s, w * self.cfg.s
            if rgb.shape != (b, 3, sh, sw):
                raise ValueError(f"rgb shape {tuple(rgb.shape)} != {(b, 3, sh, sw)}")
            d_up = self.upsample(lr)
        elif rgb.shape[-2:] != d_up.shape[-2:] or rgb.shape[0] != d_up.shape[0]:
            raise ValueError("rgb and d_up dims must match")
        dmap, code = self.encoder(d_up)
        indices, weights = self.router(d_up)
        f_d0 = self.depth_stem(d_up)
        f_r = self.rgb_stem(rgb)
        f_d = f_d0
        for _ in range(self.cfg.t_doft):
            f_d, f_r = self.doft(dmap, code, f_d, f_r)
        d_hr = self.head_outer(f_d0 + self.head_inner(f_d)) + d_up
        return {"d_hr": d_hr, "d_up": d_up, "dmap": dmap, "code": code,
                "indices": indices, "weights": weights}

    def kernel_sets(self, code, indices, weights):
        return self.generators(code, indices, weights)


def count_params(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)
