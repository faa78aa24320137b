"""Degradation representation learning and routed degradation regularization.

The upsampled LR depth is encoded into a spatial degradation map and a global
degradation code. A learned router picks k of g kernel generators (top-k by
score, softmax over the selected scores only, ties broken toward the lower
index); each selected generator emits a softmax-normalized kernel scaled by
its router weight, so the whole kernel set carries unit mass. Re-degrading
the predicted HR depth with the set (filter-and-sum) gives the training
signal that supervises the representations without degradation labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RouterDecision:
    """Top-k expert selection: k distinct indices with positive weights summing to 1."""

    indices: tuple[int, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.weights):
            raise ValueError("indices and weights must have equal length")
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("indices must be distinct")
        if any(w <= 0 for w in self.weights):
            raise ValueError("weights must be positive")
        if abs(sum(self.weights) - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {sum(self.weights)}")


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        return x + self.conv2(F.relu(self.conv1(x)))


class DegradationEncoder(nn.Module):
    """d_up -> (spatial degradation map, global degradation code)."""

    def __init__(self, c_map=16, c_code=64):
        super().__init__()
        self.stem = nn.Conv2d(1, c_map, 3, padding=1)
        self.blocks = nn.Sequential(ResidualBlock(c_map), ResidualBlock(c_map))
        self.down = nn.Sequential(
            nn.Conv2d(c_map, c_map, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(c_map, c_map, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.mlp = nn.Sequential(nn.Linear(c_map, c_code), nn.ReLU(),
                                 nn.Linear(c_code, c_code))

    def forward(self, d_up):
        dmap = self.blocks(self.stem(d_up))
        pooled = self.down(dmap).mean(dim=(2, 3))
        return dmap, self.mlp(pooled)


class Router(nn.Module):
    """Scores the g kernel generators from the upsampled depth."""

    def __init__(self, g=4, k=3, hidden=8):
        super().__init__()
        if not (1 <= k <= g):
            raise ConfigError(f"need 1 <= k <= g, got k={k}, g={g}")
        self.g, self.k = g, k
        self.encoder = nn.Sequential(
            nn.Conv2d(1, hidden, 3, stride=2, padding=1), nn.ReLU(),
            nn.Conv2d(hidden, hidden, 3, stride=2, padding=1), nn.ReLU(),
        )
        self.head = nn.Linear(hidden, g)

    def scores(self, d_up):
        return self.head(self.encoder(d_up).mean(dim=(2, 3)))

    def forward(self, d_up):
        return topk_softmax(self.scores(d_up), self.k)


def topk_softmax(scores: torch.Tensor, k: int):
    """Select the top-k scores per row (ties -> lower index), softmax over the
    selected scores only. Returns (indices [B,k], weights [B,k]); unselected
    experts get exactly zero weight and zero gradient.
    """
    if k > scores.shape[-1]:
        raise ConfigError(f"k={k} exceeds number of experts {scores.shape[-1]}")
    order = torch.argsort(-scores, dim=-1, stable=True)
    indices = order[..., :k]
    selected = scores.gather(-1, indices)
    return indices, torch.softmax(selected, dim=-1)


def decision_from_tensors(indices: torch.Tensor, weights: torch.Tensor) -> RouterDecision:
    return RouterDecision(tuple(int(i) for i in indices),
                          tuple(float(w) for w in weights))


class KernelGenerators(nn.Module):
    """g two-layer MLPs mapping the degradation code to kernel logits; the
    generator at index i-1 produces a (2i+1)x(2i+1) kernel."""

    def __init__(self, c_code=64, g=4, hidden=64):
        super().__init__()
        self.g = g
        self.sides = [2 * (i + 1) + 1 for i in range(g)]
        self.mlps = nn.ModuleList(
            nn.Sequential(nn.Linear(c_code, hidden), nn.ReLU(),
                          nn.Linear(hidden, side * side))
            for side in self.sides
        )

    def generate(self, index: int, code: torch.Tensor, weight: torch.Tensor):
        """Kernel for expert `index`: softmax(logits) scaled by the router weight,
        so its entries are positive and sum to exactly that weight."""
        side = self.sides[index]
        logits = self.mlps[index](code)
        k = torch.softmax(logits, dim=-1).reshape(-1, side, side)
        return k * weight.reshape(-1, 1, 1)

    def forward(self, code, indices, weights):
        """Per-sample kernel sets.

        indices/weights: [B, k] from the router. Returns a list of length B;
        each entry is a list of (expert_index, kernel [side, side]) pairs.
        """
        sets = []
        for b in range(code.shape[0]):
            kernels = []
            for j in range(indices.shape[1]):
                i = int(indices[b, j])
                kernels.append((i, self.generate(i, code[b:b + 1],
                                                 weights[b:b + 1, j])[0]))
            sets.append(kernels)
        return sets


def conv2d_reflect(x: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    """Correlate a [H,W] map with an odd square kernel, reflect borders,
    output dims preserved."""
    side = kernel.shape[-1]
    if side % 2 == 0 or kernel.shape[-2] != side:
        raise ValueError(f"kernel must be square with odd side, got {tuple(kernel.shape)}")
    r = side // 2
    xp = F.pad(x[None, None], (r, r, r, r), mode="reflect")
    return F.conv2d(xp, kernel[None, None])[0, 0]


def filter_and_sum(kernels, d_hr: torch.Tensor) -> torch.Tensor:
    """Sum of the convolutions of d_hr with each kernel in the set. Because the
    set carries unit mass, constant inputs are exact fixpoints."""
    out = None
    for _, k in kernels:
        y = conv2d_reflect(d_hr, k)
        out = y if out is None else out + y
    if out is None:
        raise ValueError("empty kernel set")
    return out


def effective_kernel(kernels, side: int = 9) -> torch.Tensor:
    """Single kernel equivalent to filter_and_sum: zero-pad every kernel to
    `side` (centers aligned) and sum. Entries sum to the set's total mass."""
    out = torch.zeros(side, side, dtype=kernels[0][1].dtype,
                      device=kernels[0][1].device)
    for _, k in kernels:
        if k.shape[-1] > side:
            raise ValueError(f"kernel side {k.shape[-1]} exceeds target {side}")
        p = (side - k.shape[-1]) // 2
        out[p:p + k.shape[-2], p:p + k.shape[-1]] += k
    return out


def kernel_set_mass(kernels) -> float:
    return float(sum(float(k.detach().sum()) for _, k in kernels))


def normalized_cross_correlation(a: np.ndarray, b: np.ndarray) -> float:
    """Zero-mean NCC between two equally-sized kernels, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom == 0:
        return 0.0
    return float(np.dot(a, b) / denom)
