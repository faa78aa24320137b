"""Optimization loop, deterministic data feeding, checkpointing with a
human-readable checksum manifest, and the finite-difference gradient-check
harness used by the test suite.

Training runs at 32-bit; gradient checks run the same graph at 64-bit.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import DEPTH_MAX_M, DegradationSpec
from .degradation import filter_and_sum
from .fusion import DepthSRNet, ModelConfig, count_params
from .losses import (contrastive_loss, degradation_loss, extract_features,
                     reconstruction_loss, total_loss)
from .synth import add_eval_noise, fill_holes, synth_scene

LOG_HEADER = "step,l_rec,l_deg,l_cont,l_total,rmse_cm"


class CheckpointError(IOError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 5000
    batch_size: int = 8
    lr: float = 1e-4
    seed: int = 0
    lambda_deg: float = 0.1
    lambda_cont: float = 0.1
    model: ModelConfig = field(default_factory=ModelConfig)
    # one degradation spec, or a tuple of them (scene seed picks a member)
    spec: DegradationSpec | tuple = field(default_factory=DegradationSpec)
    hr_size: int = 32
    ckpt_every: int = 0
    eval_every: int = 0
    n_eval: int = 8
    # robustness augmentation: every aug_every-th step trains on an
    # upsampled input perturbed with random noise/blur (uniform up to
    # aug_noise / aug_blur), supervised by the clean target with the
    # reconstruction loss only. 0 disables it.
    aug_every: int = 0
    aug_noise: float = 0.16
    aug_blur: float = 3.6

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.aug_every < 0 or self.aug_noise < 0 or self.aug_blur < 0:
            raise ValueError("augmentation settings must be >= 0")


def make_batch(seeds, hr_size: int, s: int, spec,
               dtype=torch.float32):
    """Deterministic training batch: normalized hole-filled LR depth, RGB,
    normalized GT depth, and the validity mask, as torch tensors.

    `spec` may be a single degradation spec or a sequence of them; with a
    sequence, each scene's seed selects one member, so degradations vary
    across the corpus while staying deterministic.
    """
    bank = list(spec) if isinstance(spec, (list, tuple)) else [spec]
    lrs, rgbs, gts, masks = [], [], [], []
    for seed in seeds:
        sample = synth_scene(seed, hr_size, s, bank[seed % len(bank)])
        lrs.append(fill_holes(sample.lr_depth.values) / DEPTH_MAX_M)
        rgbs.append(np.moveaxis(sample.rgb.values, 2, 0))
        gts.append(sample.hr_depth.values / DEPTH_MAX_M)
        masks.append(sample.gt_mask.values)
    return (torch.tensor(np.stack(lrs), dtype=dtype).unsqueeze(1),
            torch.tensor(np.stack(rgbs), dtype=dtype),
            torch.tensor(np.stack(gts), dtype=dtype).unsqueeze(1),
            torch.tensor(np.stack(masks)).unsqueeze(1))


def redegrade(model: DepthSRNet, out: dict) -> torch.Tensor:
    """Re-degrade the predicted HR depth with the generated kernel sets.

    The prediction is treated as a constant here: the re-degradation branch
    supervises the degradation encoder, router and kernel generators, while
    the prediction itself is driven only by the reconstruction loss.
    Backpropagating through the prediction would reward blurry outputs paired
    with near-identity kernels, a degenerate fixpoint of the reblur loss.
    """
    d_hr = out["d_hr"].detach()
    sets = model.kernel_sets(out["code"], out["indices"], out["weights"])
    d_d = [filter_and_sum(kernels, d_hr[b, 0]) for b, kernels in enumerate(sets)]
    return torch.stack(d_d).unsqueeze(1)


def compute_losses(model: DepthSRNet, lr, rgb, gt, mask,
                   lambda_deg=0.1, lambda_cont=0.1, m_levels=3):
    out = model(lr, rgb)
    d_d = redegrade(model, out)
    l_rec = reconstruction_loss(gt, out["d_hr"], mask)
    l_deg = degradation_loss(out["d_up"], d_d)
    # The contrastive ratio polishes the generated kernels only: its anchor is
    # rebuilt with the encoder code and router weights held constant, so its
    # gradients reach the kernel generators and nothing upstream. The ratio is
    # ill-conditioned when the degradation is mild (denominator near zero) and
    # letting it reach the shared encoder degrades reconstruction.
    sets_c = model.kernel_sets(out["code"].detach(), out["indices"],
                               out["weights"].detach())
    d_hr_c = out["d_hr"].detach()
    d_d_c = torch.stack([filter_and_sum(k, d_hr_c[b, 0])
                         for b, k in enumerate(sets_c)]).unsqueeze(1)
    l_cont = contrastive_loss(pos=extract_features(out["d_up"], m_levels),
                              anchor=extract_features(d_d_c, m_levels),
                              neg=extract_features(d_hr_c, m_levels))
    l_tot = total_loss(l_rec, l_deg, l_cont, lambda_deg, lambda_cont)
    return l_tot, {"l_rec": l_rec, "l_deg": l_deg, "l_cont": l_cont,
                   "l_total": l_tot, "out": out, "d_d": d_d}


def _augmented_step(model, cfg: TrainConfig, lr_t, rgb, gt, mask, seed: int):
    """Robustness step: perturb the upsampled depth with random noise/blur
    (the evaluation degradation protocol) and supervise against the clean
    target. Only the reconstruction loss applies; the degradation branch is
    trained on clean steps so the learned kernels keep modeling the true
    downsampling degradation rather than the augmentation."""
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        d_up = model.upsample(lr_t)
    noised = []
    for b in range(d_up.shape[0]):
        arr = d_up[b, 0].numpy() * DEPTH_MAX_M
        arr = add_eval_noise(arr, rng.uniform(0, cfg.aug_noise),
                             rng.uniform(0, cfg.aug_blur),
                             seed=int(rng.integers(2**31)))
        noised.append(arr / DEPTH_MAX_M)
    d_up_n = torch.tensor(np.stack(noised), dtype=d_up.dtype).unsqueeze(1)
    out = model(None, rgb, d_up=d_up_n)
    l_rec = reconstruction_loss(gt, out["d_hr"], mask)
    zero = torch.zeros(())
    return l_rec, {"l_rec": l_rec, "l_deg": zero, "l_cont": zero,
                   "l_total": l_rec, "out": out, "d_d": None}


def _eval_rmse_cm(model, cfg: TrainConfig) -> float:
    """Valid-mask RMSE (cm) on a small deterministic held-out set."""
    eval_seeds = [10_000_000 + i for i in range(cfg.n_eval)]
    lr, rgb, gt, mask = make_batch(eval_seeds, cfg.hr_size, cfg.model.s, cfg.spec)
    with torch.no_grad():
        pred = model(lr, rgb)["d_hr"]
    err = (pred - gt) * DEPTH_MAX_M
    m = mask.to(torch.bool)
    return float(torch.sqrt((err[m] ** 2).mean()) * 100.0)


def train_loop(cfg: TrainConfig, out_dir=None, callback=None):
    """Train a model from scratch; returns (model, log_rows).

    Fully deterministic given cfg: parameter init is seeded, batch b of step t
    uses scene seed cfg.seed*1_000_003 + t*cfg.batch_size + b. Writes a CSV
    log and (optionally) periodic checkpoints under out_dir.
    """
    torch.manual_seed(cfg.seed)
    model = DepthSRNet(cfg.model)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr,
                           betas=(0.9, 0.999), eps=1e-8)
    rows = [LOG_HEADER]
    base = cfg.seed * 1_000_003
    for step in range(cfg.steps):
        seeds = [base + step * cfg.batch_size + b for b in range(cfg.batch_size)]
        lr_t, rgb, gt, mask = make_batch(seeds, cfg.hr_size, cfg.model.s, cfg.spec)
        if cfg.aug_every and (step + 1) % cfg.aug_every == 0:
            loss, parts = _augmented_step(model, cfg, lr_t, rgb, gt, mask,
                                          base + step)
        else:
            loss, parts = compute_losses(model, lr_t, rgb, gt, mask,
                                         cfg.lambda_deg, cfg.lambda_cont)
        loss_val = float(loss.detach())
        if not math.isfinite(loss_val):
            raise TrainingDiverged(
                f"non-finite loss at step {step}; batch scene seeds: {seeds}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        rmse = ""
        if cfg.eval_every and (step + 1) % cfg.eval_every == 0:
            rmse = f"{_eval_rmse_cm(model, cfg):.6f}"
        rows.append(f"{step},{float(parts['l_rec'].detach()):.8f},"
                    f"{float(parts['l_deg'].detach()):.8f},"
                    f"{float(parts['l_cont'].detach()):.8f},{loss_val:.8f},{rmse}")
        if out_dir and cfg.ckpt_every and (step + 1) % cfg.ckpt_every == 0:
            save_checkpoint(model, opt, step + 1, cfg,
                            Path(out_dir) / f"ckpt_{step + 1:06d}.bin")
        if callback:
            callback(step, model, parts)
    if out_dir:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "train_log.csv").write_text("\n".join(rows) + "\n")
        save_checkpoint(model, opt, cfg.steps, cfg, out_dir / "ckpt_final.bin")
    return model, rows


# ---------------------------------------------------------------------------
# checkpoint container: magic + json header + raw little-endian tensor blobs,
# with a per-tensor sha256 manifest. Writes are atomic (temp + rename).

_MAGIC = b"DSRCKPT1\n"


def _named_state(model, opt, step_count):
    tensors = {f"model.{k}": v for k, v in model.state_dict().items()}
    if opt is not None:
        params = list(model.parameters())
        names = [n for n, _ in model.named_parameters()]
        for p, name in zip(params, names):
            st = opt.state.get(p)
            if st:
                tensors[f"opt.{name}.exp_avg"] = st["exp_avg"]
                tensors[f"opt.{name}.exp_avg_sq"] = st["exp_avg_sq"]
                tensors[f"opt.{name}.step"] = torch.as_tensor(st["step"], dtype=torch.float32)
    tensors["meta.step"] = torch.tensor([step_count], dtype=torch.int64)
    return tensors


def save_checkpoint(model, opt, step_count: int, cfg: TrainConfig | None, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tensors = _named_state(model, opt, step_count)
    entries, blobs, offset = [], [], 0
    for name in sorted(tensors):
        arr = tensors[name].detach().cpu().numpy()
        blob = np.ascontiguousarray(arr).tobytes()
        entries.append({"name": name, "shape": list(arr.shape),
                        "dtype": str(arr.dtype), "offset": offset,
                        "nbytes": len(blob),
                        "sha256": hashlib.sha256(blob).hexdigest()})
        blobs.append(blob)
        offset += len(blob)
    meta = {"step": step_count,
            "model_config": model.cfg.to_text(),
            "train_config": _cfg_json(cfg) if cfg else None}
    header = json.dumps({"tensors": entries, "meta": meta}).encode()
    tmp = path.with_suffix(".tmp")
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(len(header).to_bytes(8, "little"))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    os.replace(tmp, path)
    manifest = ["name shape sha256"]
    manifest += [f"{e['name']} {'x'.join(map(str, e['shape'])) or 'scalar'} {e['sha256']}"
                 for e in entries]
    path.with_name(path.stem + "_manifest.txt").write_text("\n".join(manifest) + "\n")


def _cfg_json(cfg: TrainConfig) -> str:
    d = {k: v for k, v in vars(cfg).items() if k not in ("model", "spec")}
    d["model"] = vars(cfg.model)
    bank = cfg.spec if isinstance(cfg.spec, (list, tuple)) else [cfg.spec]
    d["spec"] = [{"scale_factor": sp.scale_factor,
                  "noise_std": sp.noise_std,
                  "hole_rate": sp.hole_rate,
                  "seed": sp.seed,
                  "kernel": sp.blur_kernel.tolist()} for sp in bank]
    return json.dumps(d)


def read_checkpoint_tensors(path) -> tuple[dict, dict]:
    path = Path(path)
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise CheckpointError(f"{path}: bad magic, not a checkpoint")
        hlen = int.from_bytes(f.read(8), "little")
        try:
            header = json.loads(f.read(hlen))
        except (ValueError, UnicodeDecodeError) as e:
            raise CheckpointError(f"{path}: corrupt header: {e}") from None
        data = f.read()
    tensors = {}
    for e in header["tensors"]:
        blob = data[e["offset"]:e["offset"] + e["nbytes"]]
        if len(blob) != e["nbytes"]:
            raise CheckpointError(f"{path}: truncated payload at tensor {e['name']}")
        if hashlib.sha256(blob).hexdigest() != e["sha256"]:
            raise CheckpointError(f"{path}: checksum mismatch for {e['name']}")
        tensors[e["name"]] = np.frombuffer(blob, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return tensors, header["meta"]


def load_checkpoint(path, with_optimizer=False):
    """Rebuild the model (and optionally its Adam state) from a checkpoint."""
    tensors, meta = read_checkpoint_tensors(path)
    model = DepthSRNet(ModelConfig.from_text(meta["model_config"]))
    state = {}
    for k, v in model.state_dict().items():
        key = f"model.{k}"
        if key not in tensors:
            raise CheckpointError(f"missing tensor {key}")
        if list(tensors[key].shape) != list(v.shape):
            raise CheckpointError(f"shape mismatch for {key}: "
                                  f"{tensors[key].shape} vs {tuple(v.shape)}")
        state[k] = torch.from_numpy(tensors[key])
    model.load_state_dict(state)
    step = int(tensors["meta.step"][0])
    if not with_optimizer:
        return model, step
    tc = json.loads(meta["train_config"]) if meta.get("train_config") else {}
    opt = torch.optim.Adam(model.parameters(), lr=tc.get("lr", 1e-4),
                           betas=(0.9, 0.999), eps=1e-8)
    for name, p in model.named_parameters():
        key = f"opt.{name}.exp_avg"
        if key in tensors:
            opt.state[p] = {
                "step": torch.as_tensor(float(tensors[f"opt.{name}.step"])),
                "exp_avg": torch.from_numpy(tensors[key]),
                "exp_avg_sq": torch.from_numpy(tensors[f"opt.{name}.exp_avg_sq"]),
            }
    return model, step, opt


# ---------------------------------------------------------------------------
# finite-difference gradient checking


def grad_check(scalar_fn, inputs: list[torch.Tensor], h: float = 1e-5,
               max_coords_per_tensor: int | None = None, seed: int = 0) -> float:
    """Central-difference check of autograd gradients.

    scalar_fn() must rebuild the graph from `inputs` (64-bit leaf tensors with
    requires_grad). Returns the max relative error
    |a - n| / max(|a|, |n|, 1e-8) over checked coordinates. When a tensor has
    more coordinates than max_coords_per_tensor, a seeded random subset is
    checked.
    """
    value = scalar_fn()
    grads = torch.autograd.grad(value, inputs, allow_unused=True)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x, g in zip(inputs, grads):
        flat = x.detach().reshape(-1)
        n = flat.numel()
        coords = np.arange(n)
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        g_flat = (torch.zeros_like(flat) if g is None else g.reshape(-1))
        for i in coords:
            orig = flat[i].item()
            with torch.no_grad():
                flat[i] = orig + h
                fp = float(scalar_fn())
                flat[i] = orig - h
                fm = float(scalar_fn())
                flat[i] = orig
            numeric = (fp - fm) / (2 * h)
            analytic = float(g_flat[i])
            rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
            worst = max(worst, rel)
    return worst
