import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from videopred.decoders import FlowDecoder, FrameDecoder, flow_supervision_loss, warp


def reference_warp(flow: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Brute-force per-pixel bilinear gather with border replication.

    Written independently of the tensor implementation: plain Python loops,
    no vectorization."""
    c, h, w = frame.shape
    out = np.zeros_like(frame)
    for i in range(h):
        for j in range(w):
            sy = min(max(i + flow[1, i, j], 0.0), h - 1.0)
            sx = min(max(j + flow[0, i, j], 0.0), w - 1.0)
            y0, x0 = int(np.floor(sy)), int(np.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            wy, wx = sy - y0, sx - x0
            for ch in range(c):
                out[ch, i, j] = (
                    (1 - wy) * (1 - wx) * frame[ch, y0, x0]
                    + (1 - wy) * wx * frame[ch, y0, x1]
                    + wy * (1 - wx) * frame[ch, y1, x0]
                    + wy * wx * frame[ch, y1, x1]
                )
    return out


class TestFrameDecoder:
    def setup_method(self):
        torch.manual_seed(0)
        self.dec = FrameDecoder(image_size=16, channels=1, d_w=3, d_y=2, base_channels=4)

    def test_shape_and_range(self):
        with torch.no_grad():
            out = self.dec(torch.randn(5, 3), torch.randn(5, 2))
        assert out.shape == (5, 1, 16, 16)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_extreme_inputs_stay_in_range(self):
        with torch.no_grad():
            out = self.dec(torch.randn(4, 3) * 100, torch.randn(4, 2) * 100)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_equal_latents_equal_frames(self):
        w, y = torch.rand(1, 3), torch.rand(1, 2)
        assert torch.equal(self.dec(w, y), self.dec(w.clone(), y.clone()))

    def test_leading_dims(self):
        out = self.dec(torch.randn(2, 4, 3), torch.randn(2, 4, 2))
        assert out.shape == (2, 4, 1, 16, 16)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            self.dec(torch.randn(1, 4), torch.randn(1, 2))

    def test_pixel_gradient_matches_finite_differences(self):
        torch.manual_seed(1)
        dec = FrameDecoder(image_size=2, channels=1, d_w=2, d_y=2, base_channels=4).double()
        w = torch.rand(1, 2, dtype=torch.float64)
        y = torch.rand(1, 2, dtype=torch.float64)

        analytic = torch.autograd.functional.jacobian(
            lambda yy: dec(w, yy), y
        ).reshape(4, 2)
        eps = 1e-6
        fd = torch.zeros(4, 2, dtype=torch.float64)
        with torch.no_grad():
            for i in range(2):
                delta = torch.zeros_like(y)
                delta[0, i] = eps
                fd[:, i] = ((dec(w, y + delta) - dec(w, y - delta)) / (2 * eps)).reshape(-1)
        rel = (analytic - fd).norm() / fd.norm()
        assert rel < 1e-4


class TestFlowDecoder:
    def test_shape(self):
        torch.manual_seed(0)
        dec = FlowDecoder(image_size=16, in_dim=5, base_channels=4)
        out = dec(torch.randn(3, 5))
        assert out.shape == (3, 2, 16, 16)

    def test_deterministic(self):
        torch.manual_seed(0)
        dec = FlowDecoder(image_size=16, in_dim=5, base_channels=4)
        g = torch.randn(2, 5)
        assert torch.equal(dec(g), dec(g))

    def test_zero_init_head_gives_zero_flow(self):
        torch.manual_seed(0)
        dec = FlowDecoder(image_size=16, in_dim=5, base_channels=4, zero_init_head=True)
        out = dec(torch.randn(4, 5))
        assert torch.equal(out, torch.zeros_like(out))


class TestWarp:
    def test_zero_flow_identity_exact(self):
        g = torch.Generator().manual_seed(0)
        x = torch.rand(3, 8, 8, generator=g)
        out = warp(torch.zeros(2, 8, 8), x)
        assert torch.equal(out, x)

    def test_integer_shift_matches_oracle(self):
        g = torch.Generator().manual_seed(1)
        for trial in range(20):
            x = torch.rand(1, 8, 8, generator=g, dtype=torch.float64)
            f = torch.zeros(2, 8, 8, dtype=torch.float64)
            f[0] = float(torch.randint(-3, 4, (1,), generator=g))
            f[1] = float(torch.randint(-3, 4, (1,), generator=g))
            ours = warp(f, x).numpy()
            ref = reference_warp(f.numpy(), x.numpy())
            assert np.allclose(ours, ref, atol=1e-12)

    def test_unit_right_shift_columns(self):
        g = torch.Generator().manual_seed(2)
        x = torch.rand(1, 8, 8, generator=g)
        f = torch.zeros(2, 8, 8)
        f[0] = 1.0
        out = warp(f, x)
        assert torch.equal(out[0, :, :-1], x[0, :, 1:])
        assert torch.equal(out[0, :, -1], x[0, :, -1])  # border replication

    def test_half_pixel_two_columns(self):
        x = torch.tensor([[[1.0, 3.0]]])
        f = torch.zeros(2, 1, 2)
        f[0] = 0.5
        out = warp(f, x)
        assert out[0, 0, 0].item() == pytest.approx(2.0)   # (a + b) / 2
        assert out[0, 0, 1].item() == pytest.approx(3.0)   # clamped at border

    def test_fractional_flow_matches_oracle(self):
        g = torch.Generator().manual_seed(3)
        for trial in range(10):
            x = torch.rand(2, 6, 7, generator=g, dtype=torch.float64)
            f = (torch.rand(2, 6, 7, generator=g, dtype=torch.float64) - 0.5) * 6
            ours = warp(f, x).numpy()
            ref = reference_warp(f.numpy(), x.numpy())
            assert np.allclose(ours, ref, atol=1e-12)

    def test_batched(self):
        g = torch.Generator().manual_seed(4)
        x = torch.rand(3, 1, 8, 8, generator=g)
        f = torch.randn(3, 2, 8, 8, generator=g)
        out = warp(f, x)
        for b in range(3):
            assert torch.allclose(out[b], warp(f[b], x[b]))

    def test_differentiable_in_both_arguments(self):
        x = torch.rand(1, 5, 5, dtype=torch.float64, requires_grad=True)
        f = (torch.rand(2, 5, 5, dtype=torch.float64) - 0.5).requires_grad_()
        warp(f, x).sum().backward()
        assert x.grad is not None and f.grad is not None
        assert float(x.grad.abs().sum()) > 0
        assert float(f.grad.abs().sum()) > 0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            warp(torch.zeros(2, 4, 4), torch.zeros(1, 8, 8))
        with pytest.raises(ValueError):
            warp(torch.zeros(3, 4, 4), torch.zeros(1, 4, 4))


class TestFlowSupervisionLoss:
    def test_perfect_warp_zero(self):
        x = torch.rand(4, 1, 5, 5)
        assert float(flow_supervision_loss(x, x.clone())) == 0.0

    def test_single_pixel_difference(self):
        a = torch.zeros(1, 1, 4, 4)
        b = torch.zeros(1, 1, 4, 4)
        b[0, 0, 2, 1] = 0.6
        assert float(flow_supervision_loss(a, b)) == pytest.approx(0.6)

    @given(st.integers(0, 2 ** 16))
    @settings(max_examples=20, deadline=None)
    def test_additivity_over_timesteps(self, seed):
        g = torch.Generator().manual_seed(seed)
        a = torch.rand(3, 1, 4, 4, generator=g)
        b = torch.rand(3, 1, 4, 4, generator=g)
        total = float(flow_supervision_loss(a, b))
        parts = sum(
            float(flow_supervision_loss(a[t: t + 1], b[t: t + 1])) for t in range(3)
        )
        assert total == pytest.approx(parts, rel=1e-6)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            flow_supervision_loss(torch.zeros(2, 1, 4, 4), torch.zeros(3, 1, 4, 4))
