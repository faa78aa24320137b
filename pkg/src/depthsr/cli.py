"""Command-line entry point.

Subcommands: synth, train, eval, sweep, kernels, gradcheck, ablate.
CSV files are the authoritative outputs; plots are rendered from them.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bench import (DEFAULT_SWEEP_BLUR, DEFAULT_SWEEP_STDS, ablate_axis,
                    ablate_csv, eval_csv, eval_dataset, export_kernels,
                    measure_latency, noise_sweep, sweep_csv)
from .data import DegradationSpec, gaussian_kernel, load_sample, save_sample, list_samples
from .fusion import ModelConfig, count_params
from .gradsuite import run_suite
from .synth import synth_scene
from .training import TrainConfig, load_checkpoint, train_loop


def _spec_from_args(args) -> DegradationSpec:
    kernel = gaussian_kernel(args.kernel_size, args.kernel_sigma_x,
                             args.kernel_sigma_y, np.deg2rad(args.kernel_angle))
    return DegradationSpec(blur_kernel=kernel, scale_factor=args.scale,
                           noise_std=args.noise_std, hole_rate=args.hole_rate)


def _add_spec_args(p):
    p.add_argument("--scale", type=int, default=2)
    p.add_argument("--kernel-size", type=int, default=7)
    p.add_argument("--kernel-sigma-x", type=float, default=1.6)
    p.add_argument("--kernel-sigma-y", type=float, default=0.9)
    p.add_argument("--kernel-angle", type=float, default=30.0,
                   help="kernel rotation in degrees")
    p.add_argument("--noise-std", type=float, default=0.0)
    p.add_argument("--hole-rate", type=float, default=0.0)


def cmd_synth(args) -> int:
    spec = _spec_from_args(args)
    for i in range(args.n):
        sample = synth_scene(args.seed + i, args.hr_size, args.scale, spec)
        save_sample(sample, args.out, args.split, i)
    print(f"wrote {args.n} samples to {args.out}/{args.split}")
    return 0


def cmd_train(args) -> int:
    model_cfg = ModelConfig(t_doft=args.t_doft, g=args.g, k=args.k,
                            s=args.scale, tiny=args.tiny)
    cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size, lr=args.lr,
                      seed=args.seed, lambda_deg=args.lambda_deg,
                      lambda_cont=args.lambda_cont, model=model_cfg,
                      spec=_spec_from_args(args), hr_size=args.hr_size,
                      ckpt_every=args.ckpt_every, eval_every=args.eval_every,
                      aug_every=args.aug_every, aug_noise=args.aug_noise,
                      aug_blur=args.aug_blur)
    model, _ = train_loop(cfg, out_dir=args.out)
    print(f"trained {cfg.steps} steps, {count_params(model)} params, "
          f"checkpoint at {args.out}/ckpt_final.bin")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.ckpt) if args.ckpt else (None, 0)
    rep = eval_dataset(model, args.data, args.split)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "eval.csv").write_text(eval_csv(rep))
    if model is not None:
        sample = load_sample(args.data, args.split, rep.per_sample[0][0])
        latency = measure_latency(model, sample.lr_depth.values, sample.rgb.values)
    else:
        latency = 0.0
    print(f"rmse_cm={rep.rmse_cm:.4f} bicubic_rmse_cm={rep.bicubic_rmse_cm:.4f} "
          f"n={rep.n_samples} params={rep.params} latency_ms={latency:.2f}")
    return 0


def cmd_sweep(args) -> int:
    model, _ = load_checkpoint(args.ckpt) if args.ckpt else (None, 0)
    result = noise_sweep(model, args.data, args.split,
                         stds=args.stds, blur_std=args.blur_std)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "sweep.csv"
    csv_path.write_text(sweep_csv(result))
    _plot_sweep(csv_path, out / "sweep.png")
    for std, rmse in result.points:
        print(f"noise_std={std:.2f} rmse_cm={rmse:.4f}")
    return 0


def _plot_sweep(csv_path, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    rows = [line.split(",") for line in
            Path(csv_path).read_text().strip().splitlines()[1:]]
    xs = [float(r[0]) for r in rows]
    ys = [float(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("noise std (normalized depth)")
    ax.set_ylabel("RMSE (cm)")
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def cmd_kernels(args) -> int:
    model, _ = load_checkpoint(args.ckpt)
    indices = list_samples(args.data, args.split)
    sample = load_sample(args.data, args.split, indices[args.index])
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    _, eff = export_kernels(model, sample.lr_depth.values, out / "kernels.txt")
    _plot_kernel(eff, out / "effective_kernel.png")
    print(f"wrote {out / 'kernels.txt'}")
    return 0


def _plot_kernel(kernel, png_path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, ax = plt.subplots(figsize=(3.5, 3.5))
    im = ax.imshow(kernel, cmap="viridis")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(png_path, dpi=120)
    plt.close(fig)


def cmd_gradcheck(args) -> int:
    results = run_suite(verbose=True)
    return 0 if all(ok for _, _, ok in results) else 1


def cmd_ablate(args) -> int:
    model_cfg = ModelConfig(t_doft=args.t_doft, s=args.scale)
    base = TrainConfig(steps=args.steps, seed=args.seed, model=model_cfg,
                       spec=_spec_from_args(args), hr_size=args.hr_size)
    rows = ablate_axis(args.axis, base, args.data, args.split)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / f"ablate_{args.axis}.csv").write_text(ablate_csv(rows))
    for name, rmse, params in rows:
        print(f"{name}: rmse_cm={rmse:.4f} params={params}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="depthsr",
                                description="blind depth super-resolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--n", type=int, default=8)
    sp.add_argument("--hr-size", type=int, default=32)
    sp.add_argument("--split", default="test")
    sp.add_argument("--out", required=True)
    _add_spec_args(sp)
    sp.set_defaults(fn=cmd_synth)

    tp = sub.add_parser("train", help="train a model on synthetic scenes")
    tp.add_argument("--steps", type=int, default=5000)
    tp.add_argument("--batch-size", type=int, default=8)
    tp.add_argument("--lr", type=float, default=1e-4)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--lambda-deg", type=float, default=0.1)
    tp.add_argument("--lambda-cont", type=float, default=0.1)
    tp.add_argument("--t-doft", type=int, default=5)
    tp.add_argument("--g", type=int, default=4)
    tp.add_argument("--k", type=int, default=3)
    tp.add_argument("--tiny", action="store_true")
    tp.add_argument("--hr-size", type=int, default=32)
    tp.add_argument("--ckpt-every", type=int, default=0)
    tp.add_argument("--eval-every", type=int, default=100)
    tp.add_argument("--aug-every", type=int, default=0,
                    help="every n-th step trains on a noised/blurred "
                         "upsampled input (0 = off)")
    tp.add_argument("--aug-noise", type=float, default=0.16)
    tp.add_argument("--aug-blur", type=float, default=3.6)
    tp.add_argument("--out", required=True)
    _add_spec_args(tp)
    tp.set_defaults(fn=cmd_train)

    ep = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    ep.add_argument("--ckpt", help="omit for the bicubic identity baseline")
    ep.add_argument("--data", required=True)
    ep.add_argument("--split", default="test")
    ep.add_argument("--out")
    ep.set_defaults(fn=cmd_eval)

    wp = sub.add_parser("sweep", help="noise-robustness sweep")
    wp.add_argument("--ckpt")
    wp.add_argument("--data", required=True)
    wp.add_argument("--split", default="test")
    wp.add_argument("--stds", type=float, nargs="+", default=list(DEFAULT_SWEEP_STDS))
    wp.add_argument("--blur-std", type=float, default=DEFAULT_SWEEP_BLUR)
    wp.add_argument("--out")
    wp.set_defaults(fn=cmd_sweep)

    kp = sub.add_parser("kernels", help="export learned degradation kernels")
    kp.add_argument("--ckpt", required=True)
    kp.add_argument("--data", required=True)
    kp.add_argument("--split", default="test")
    kp.add_argument("--index", type=int, default=0)
    kp.add_argument("--out")
    kp.set_defaults(fn=cmd_kernels)

    gp = sub.add_parser("gradcheck", help="run the finite-difference suite")
    gp.set_defaults(fn=cmd_gradcheck)

    ap = sub.add_parser("ablate", help="run one ablation axis")
    ap.add_argument("--axis", required=True, choices=["t_doft", "loss", "router"])
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--t-doft", type=int, default=2)
    ap.add_argument("--hr-size", type=int, default=32)
    ap.add_argument("--data", required=True)
    ap.add_argument("--split", default="test")
    ap.add_argument("--out")
    _add_spec_args(ap)
    ap.set_defaults(fn=cmd_ablate)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
