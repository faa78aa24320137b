import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from depthsr.bench import (DEFAULT_SWEEP_STDS, ablate_csv, eval_csv,
                           eval_dataset, export_kernels, measure_latency,
                           mean_effective_kernel, noise_sweep, rmse_valid,
                           sweep_csv)
from depthsr.cli import main
from depthsr.data import DegradationSpec, gaussian_kernel, save_sample
from depthsr.fusion import DepthSRNet, ModelConfig
from depthsr.synth import synth_scene

SPEC = DegradationSpec(blur_kernel=gaussian_kernel(5, 1.2, 0.8, 0.3),
                       scale_factor=2)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    for i in range(3):
        save_sample(synth_scene(100 + i, 16, 2, SPEC), root, "test", i)
    return root


@pytest.fixture(scope="module")
def small_model():
    torch.manual_seed(0)
    return DepthSRNet(ModelConfig(c_feat=4, c_dmap=4, c_code=8, t_doft=1, s=2))


class TestRmseValid:
    def test_exact_is_zero(self):
        x = np.random.default_rng(0).uniform(1, 4, (6, 6))
        assert rmse_valid(x, x, np.ones_like(x, dtype=bool)) == 0.0

    def test_two_pixel_hand_example(self):
        gt = np.array([[1.0, 2.0]])
        pred = np.array([[1.03, 2.04]])
        mask = np.array([[True, True]])
        assert abs(rmse_valid(pred, gt, mask) - 3.5355339) < 1e-5

    def test_invalid_pixels_ignored(self):
        gt = np.ones((4, 4))
        pred = gt.copy()
        pred[0, 0] = 50.0
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        assert rmse_valid(pred, gt, mask) == 0.0

    def test_empty_mask_rejected(self):
        with pytest.raises(ValueError):
            rmse_valid(np.ones((2, 2)), np.ones((2, 2)),
                       np.zeros((2, 2), dtype=bool))

    def test_dim_mismatch_rejected(self):
        with pytest.raises(ValueError):
            rmse_valid(np.ones((2, 2)), np.ones((2, 3)),
                       np.ones((2, 3), dtype=bool))

    def test_matches_loop_oracle(self):
        rng = np.random.default_rng(3)
        pred = rng.uniform(0, 5, (8, 8))
        gt = rng.uniform(0, 5, (8, 8))
        mask = rng.random((8, 8)) > 0.4
        acc, n = 0.0, 0
        for y in range(8):
            for x in range(8):
                if mask[y, x]:
                    acc += (pred[y, x] - gt[y, x]) ** 2
                    n += 1
        assert abs(rmse_valid(pred, gt, mask) - np.sqrt(acc / n) * 100) <= 1e-9

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_scale_by_100_property(self, seed):
        rng = np.random.default_rng(seed)
        pred = rng.uniform(0, 5, (5, 5))
        gt = rng.uniform(0, 5, (5, 5))
        mask = np.ones((5, 5), dtype=bool)
        got = rmse_valid(pred, gt, mask)
        assert got >= 0
        assert abs(got - np.sqrt(np.mean((pred - gt) ** 2)) * 100) < 1e-9


class TestEvalDataset:
    def test_identity_model_equals_bicubic_baseline(self, dataset):
        rep = eval_dataset(None, dataset, "test")
        assert rep.rmse_cm == rep.bicubic_rmse_cm
        assert rep.n_samples == 3 and rep.params == 0

    def test_model_report_structure(self, dataset, small_model):
        rep = eval_dataset(small_model, dataset, "test")
        assert len(rep.per_sample) == 3
        assert rep.params > 0
        csv = eval_csv(rep)
        assert csv.splitlines()[0] == "index,rmse_cm"
        assert len(csv.strip().splitlines()) == 4

    def test_missing_split_errors(self, dataset):
        with pytest.raises(FileNotFoundError):
            eval_dataset(None, dataset, "nope")


class TestNoiseSweep:
    def test_row_count_and_monotone_for_identity(self, dataset):
        result = noise_sweep(None, dataset, "test", stds=(0.05, 0.15),
                             blur_std=1.0)
        csv = sweep_csv(result)
        assert csv.splitlines()[0] == "noise_std,rmse_cm"
        assert len(csv.strip().splitlines()) == 3
        (s0, r0), (s1, r1) = result.points
        assert s1 > s0 and r1 > r0  # more noise, worse identity baseline

    def test_non_increasing_stds_rejected(self, dataset):
        with pytest.raises(ValueError):
            noise_sweep(None, dataset, "test", stds=(0.1, 0.1))

    def test_default_grid(self):
        assert DEFAULT_SWEEP_STDS == (0.04, 0.07, 0.10, 0.13, 0.16)


class TestKernelExport:
    def test_block_count_and_mass(self, dataset, small_model):
        s = synth_scene(7, 16, 2, SPEC)
        text, eff = export_kernels(small_model, s.lr_depth.values)
        headers = [l for l in text.splitlines() if l.startswith("kernel ")]
        assert len(headers) == small_model.cfg.k + 1  # k experts + effective
        assert eff.shape == (9, 9)
        assert abs(eff.sum() - 1.0) < 1e-6

    def test_mean_effective_kernel(self, dataset, small_model):
        eff = mean_effective_kernel(small_model, dataset, "test", limit=2)
        assert eff.shape == (9, 9)
        assert abs(eff.sum() - 1.0) < 1e-5


def test_measure_latency_positive(small_model):
    s = synth_scene(11, 16, 2, SPEC)
    ms = measure_latency(small_model, s.lr_depth.values, s.rgb.values,
                         warmups=1, reps=3)
    assert ms > 0


def test_ablate_csv_format():
    csv = ablate_csv([("rec", 12.5, 1000), ("all", 11.0, 1000)])
    lines = csv.strip().splitlines()
    assert lines[0] == "setting,rmse_cm,params"
    assert lines[1] == "rec,12.500000,1000"


class TestCli:
    def test_synth_creates_quintuples(self, tmp_path):
        rc = main(["synth", "--seed", "0", "--n", "8", "--hr-size", "16",
                   "--out", str(tmp_path)])
        assert rc == 0
        for i in range(8):
            for suffix in ("hr.pfm", "lr.pfm", "rgb.ppm", "mask.pgm", "spec.txt"):
                assert (tmp_path / "test" / f"{i:05d}_{suffix}").exists(), suffix

    def test_eval_baseline(self, tmp_path, capsys):
        main(["synth", "--n", "2", "--hr-size", "16", "--out", str(tmp_path)])
        rc = main(["eval", "--data", str(tmp_path), "--out", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert "rmse_cm=" in out
        assert (tmp_path / "eval.csv").exists()

    def test_sweep_emits_csv_and_plot(self, tmp_path):
        main(["synth", "--n", "2", "--hr-size", "16", "--out", str(tmp_path)])
        rc = main(["sweep", "--data", str(tmp_path), "--out", str(tmp_path),
                   "--stds", "0.05", "0.1", "--blur-std", "1.0"])
        assert rc == 0
        assert len((tmp_path / "sweep.csv").read_text().strip().splitlines()) == 3
        assert (tmp_path / "sweep.png").exists()

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as e:
            main(["eval", "--bogus"])
        assert e.value.code == 2

    def test_runtime_failure_exits_1(self, tmp_path):
        assert main(["eval", "--data", str(tmp_path / "empty")]) == 1

    def test_ablate_loss_axis_four_rows(self, tmp_path):
        main(["synth", "--n", "2", "--hr-size", "16", "--out", str(tmp_path)])
        rc = main(["ablate", "--axis", "loss", "--steps", "2", "--hr-size", "16",
                   "--data", str(tmp_path), "--out", str(tmp_path)])
        assert rc == 0
        lines = (tmp_path / "ablate_loss.csv").read_text().strip().splitlines()
        assert len(lines) == 5
        assert [l.split(",")[0] for l in lines[1:]] == ["rec", "rec+deg",
                                                        "rec+cont", "all"]
