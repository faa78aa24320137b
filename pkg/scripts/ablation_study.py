"""Run the three ablation axes (fusion depth, loss terms, routing width) at
a small training budget and collect one CSV per axis.

Usage: python scripts/ablation_study.py [--steps 600] [--out runs/ablation]
"""

import argparse
import math
from pathlib import Path

from depthsr.bench import ablate_axis, ablate_csv
from depthsr.data import DegradationSpec, gaussian_kernel, save_sample
from depthsr.fusion import ModelConfig
from depthsr.synth import synth_scene
from depthsr.training import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--axes", nargs="+", default=["loss", "t_doft", "router"])
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = DegradationSpec(
        blur_kernel=gaussian_kernel(7, 1.6, 0.9, math.radians(30.0)),
        scale_factor=2)
    data = out / "data"
    for i in range(8):
        save_sample(synth_scene(20_000_000 + i, 32, 2, spec), data, "test", i)

    base = TrainConfig(steps=args.steps, batch_size=8, lr=1e-3, seed=args.seed,
                       model=ModelConfig(s=2, tiny=True, t_doft=2), spec=spec,
                       hr_size=32)
    for axis in args.axes:
        rows = ablate_axis(axis, base, data, "test")
        (out / f"ablate_{axis}.csv").write_text(ablate_csv(rows))
        for name, rmse, params in rows:
            print(f"{axis}/{name}: rmse {rmse:.3f} cm ({params} params)",
                  flush=True)


if __name__ == "__main__":
    main()
