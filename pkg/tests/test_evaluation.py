import hashlib
import math

import pytest
import torch

from videopred.data import generate_panning_scene
from videopred.evaluation import (
    copy_last_frame_baseline,
    evaluate,
    evaluate_baseline,
    psnr,
    ssim,
)
from videopred.model import VideoPredictionModel


class TestPSNR:
    def test_identity_hits_cap(self):
        x = torch.rand(1, 16, 16)
        assert psnr(x, x.clone()) == 100.0

    def test_known_mse(self):
        # MSE 0.01 -> 10 log10(1/0.01) = 20 dB (up to float64 representation
        # of 0.01).
        x = torch.zeros(1, 10, 10, dtype=torch.float64)
        x_hat = torch.full((1, 10, 10), 0.1, dtype=torch.float64)
        assert psnr(x, x_hat) == pytest.approx(20.0, abs=1e-9)

    def test_opposite_constants(self):
        a = torch.zeros(1, 8, 8)
        b = torch.ones(1, 8, 8)
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-7)

    def test_strictly_decreasing_under_noise_ladder(self):
        g = torch.Generator().manual_seed(0)
        x = torch.rand(1, 32, 32, generator=g) * 0.5 + 0.25
        noise = torch.randn(1, 32, 32, generator=g)
        values = []
        for amp in (0.01, 0.02, 0.04, 0.08, 0.16):
            x_hat = (x + amp * noise).clamp(0, 1)
            values.append(psnr(x, x_hat))
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(torch.zeros(1, 8, 8), torch.zeros(1, 4, 4))


class TestSSIM:
    def test_identity(self):
        g = torch.Generator().manual_seed(1)
        x = torch.rand(1, 16, 16, generator=g)
        assert ssim(x, x.clone()) == pytest.approx(1.0, abs=1e-6)

    def test_symmetry(self):
        g = torch.Generator().manual_seed(2)
        a = torch.rand(1, 16, 16, generator=g, dtype=torch.float64)
        b = torch.rand(1, 16, 16, generator=g, dtype=torch.float64)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-9)

    def test_constant_zero_vs_constant_one(self):
        # mu1=0, mu2=1, zero variances: SSIM = C1 / (1 + C1).
        a = torch.zeros(1, 16, 16)
        b = torch.ones(1, 16, 16)
        expected = (0.01 ** 2) / (1 + 0.01 ** 2)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-7)

    def test_range_bounds_random_pairs(self):
        g = torch.Generator().manual_seed(3)
        for _ in range(20):
            a = torch.rand(1, 12, 12, generator=g)
            b = torch.rand(1, 12, 12, generator=g)
            s = ssim(a, b)
            assert -1.0 <= s <= 1.0
            assert s < 1.0 - 1e-6  # equals 1 only for identical inputs

    def test_window_larger_than_image(self):
        with pytest.raises(ValueError):
            ssim(torch.zeros(1, 8, 8), torch.zeros(1, 8, 8))

    def test_multichannel_mean(self):
        g = torch.Generator().manual_seed(4)
        a = torch.rand(3, 16, 16, generator=g)
        per_channel = sum(ssim(a[c], a[c] * 0.9) for c in range(3)) / 3
        assert ssim(a, a * 0.9) == pytest.approx(per_channel, abs=1e-6)


class TestCopyLastFrameBaseline:
    def test_static_scene_is_perfect(self):
        ds = generate_panning_scene(0, 2, 8, 32, (0, 0))
        report = evaluate_baseline(ds.sequences, k=3, horizon=4)
        assert report.psnr_mean == 100.0

    def test_output_length(self):
        cond = torch.rand(4, 1, 16, 16)
        out = copy_last_frame_baseline(cond, 7)
        assert out.shape == (7, 1, 16, 16)
        assert torch.equal(out[0], cond[-1])
        batched = copy_last_frame_baseline(cond.unsqueeze(0), 7)
        assert batched.shape == (1, 7, 1, 16, 16)

    def test_panning_psnr_decays(self):
        # 1 px/frame pan: misalignment grows with each prediction step, so
        # the baseline curve must fall over the first few steps.
        ds = generate_panning_scene(1, 4, 12, 32, (1, 0))
        report = evaluate_baseline(ds.sequences, k=2, horizon=6)
        curve = report.psnr_per_timestep
        assert curve[0] > curve[1] > curve[2] > curve[3]


class TestEvaluateProtocol:
    def _model_and_data(self, micro_config, n=3, t=8):
        torch.manual_seed(0)
        model = VideoPredictionModel(
            micro_config.with_overrides(image_size=16, patch_size=8, base_channels=4)
        )
        g = torch.Generator().manual_seed(1)
        seqs = torch.rand(n, t, 1, 16, 16, generator=g)
        return model, seqs

    def test_single_sample_mean_equals_best(self, micro_config):
        model, seqs = self._model_and_data(micro_config)
        mean = evaluate(model, seqs, k=2, horizon=3, n_samples=1,
                        aggregation="mean", generator=torch.Generator().manual_seed(0))
        best = evaluate(model, seqs, k=2, horizon=3, n_samples=1,
                        aggregation="best", generator=torch.Generator().manual_seed(0))
        assert mean.psnr_per_timestep == best.psnr_per_timestep
        assert mean.psnr_mean == best.psnr_mean

    def test_best_of_n_at_least_mean_of_n(self, micro_config):
        model, seqs = self._model_and_data(micro_config, n=4)
        mean = evaluate(model, seqs, k=2, horizon=3, n_samples=4,
                        aggregation="mean", generator=torch.Generator().manual_seed(7))
        best = evaluate(model, seqs, k=2, horizon=3, n_samples=4,
                        aggregation="best", generator=torch.Generator().manual_seed(7))
        for m, b in zip(mean.per_sequence_psnr, best.per_sequence_psnr):
            assert b >= m - 1e-12

    def test_curve_lengths_match_horizon(self, micro_config):
        model, seqs = self._model_and_data(micro_config)
        report = evaluate(model, seqs, k=2, horizon=5, n_samples=2,
                          generator=torch.Generator().manual_seed(0))
        assert len(report.psnr_per_timestep) == 5
        assert len(report.ssim_per_timestep) == 5
        assert report.n_samples == 2 and report.aggregation == "mean"
        assert report.lpips is None

    def test_evaluation_never_mutates_parameters(self, micro_config):
        model, seqs = self._model_and_data(micro_config)

        def digest():
            h = hashlib.sha256()
            for name, t in sorted(model.state_dict().items()):
                h.update(name.encode())
                h.update(t.numpy().tobytes())
            return h.hexdigest()

        before = digest()
        evaluate(model, seqs, k=2, horizon=3, n_samples=2,
                 generator=torch.Generator().manual_seed(0))
        assert digest() == before

    def test_confidence_interval_over_sequences(self, micro_config):
        model, seqs = self._model_and_data(micro_config, n=4)
        report = evaluate(model, seqs, k=2, horizon=3, n_samples=2,
                          generator=torch.Generator().manual_seed(0))
        vals = torch.tensor(report.per_sequence_psnr, dtype=torch.float64)
        expected = 1.96 * float(vals.std(unbiased=True)) / math.sqrt(len(vals))
        assert report.psnr_ci95 == pytest.approx(expected, rel=1e-6)

    def test_rejects_short_sequences_and_bad_args(self, micro_config):
        model, seqs = self._model_and_data(micro_config, t=4)
        with pytest.raises(ValueError):
            evaluate(model, seqs, k=2, horizon=5)
        with pytest.raises(ValueError):
            evaluate(model, seqs, k=2, horizon=2, n_samples=0)
        with pytest.raises(ValueError):
            evaluate(model, seqs, k=2, horizon=2, aggregation="median")

    def test_report_serialization(self, micro_config, tmp_path):
        model, seqs = self._model_and_data(micro_config)
        report = evaluate(model, seqs, k=2, horizon=3, n_samples=1,
                          generator=torch.Generator().manual_seed(0))
        json_path = report.save(tmp_path / "r.json")
        tsv_path = report.save_curves(tmp_path / "r.tsv")
        assert json_path.exists()
        lines = tsv_path.read_text().strip().splitlines()
        assert lines[0] == "timestep\tpsnr\tssim"
        assert len(lines) == 4
