import pytest
import torch

from videopred.appearance import AppearanceDynamics, transition_supervision_loss


def make_dynamics(seed=0) -> AppearanceDynamics:
    torch.manual_seed(seed)
    return AppearanceDynamics(d_w=4, d_zw=3, rnn_width=5, hidden=8)


class TestInferTransitions:
    def test_causality(self):
        dyn = make_dynamics()
        h = torch.rand(1, 6, 4)
        z, _ = dyn.infer_transitions(h)
        h2 = h.clone()
        h2[:, 4:] += 1.0
        z2, _ = dyn.infer_transitions(h2)
        # outputs for t = 2..4 depend only on features up to t
        assert torch.allclose(z[:, :3], z2[:, :3], atol=1e-9)

    def test_two_frames_one_transition(self):
        dyn = make_dynamics()
        z, _ = dyn.infer_transitions(torch.rand(2, 2, 4))
        assert z.shape == (2, 1, 3)

    def test_deterministic(self):
        dyn = make_dynamics()
        h = torch.rand(1, 4, 4)
        a, _ = dyn.infer_transitions(h)
        b, _ = dyn.infer_transitions(h)
        assert torch.equal(a, b)

    def test_too_short_rejected(self):
        dyn = make_dynamics()
        with pytest.raises(ValueError):
            dyn.infer_transitions(torch.rand(1, 1, 4))


class TestPredictTransition:
    def test_equal_inputs_equal_outputs(self):
        dyn = make_dynamics()
        w = torch.rand(1, 4)
        assert torch.equal(dyn.predict_transition(w), dyn.predict_transition(w.clone()))

    def test_output_dimension(self):
        dyn = make_dynamics()
        assert dyn.predict_transition(torch.rand(7, 4)).shape == (7, 3)

    def test_hand_computed_one_dim(self):
        torch.manual_seed(0)
        dyn = AppearanceDynamics(d_w=1, d_zw=1, rnn_width=2, hidden=1)
        with torch.no_grad():
            dyn.predictor[0].weight.copy_(torch.tensor([[3.0]]))
            dyn.predictor[0].bias.copy_(torch.tensor([-0.2]))
            dyn.predictor[2].weight.copy_(torch.tensor([[0.5]]))
            dyn.predictor[2].bias.copy_(torch.tensor([0.1]))
        w = 0.4
        out = dyn.predict_transition(torch.tensor([[w]]))
        expected = 0.5 * max(0.0, 3.0 * w - 0.2) + 0.1
        assert out.item() == pytest.approx(expected, abs=1e-7)


class TestAppearanceStep:
    def test_zero_init_residual_is_identity(self):
        dyn = make_dynamics()
        w = torch.rand(5, 4)
        assert torch.equal(dyn.step(w, torch.randn(5, 3)), w)

    def test_chain_length(self):
        dyn = make_dynamics()
        w = torch.rand(1, 4)
        states = [w]
        for _ in range(6):
            states.append(dyn.step(states[-1], torch.randn(1, 3)))
        assert len(states) == 7

    def test_hand_computed_one_dim(self):
        torch.manual_seed(0)
        dyn = AppearanceDynamics(d_w=1, d_zw=1, rnn_width=2, hidden=1)
        with torch.no_grad():
            r = dyn.residual
            r[0].weight.copy_(torch.tensor([[1.0, 2.0]]))
            r[0].bias.copy_(torch.tensor([0.0]))
            r[2].weight.copy_(torch.tensor([[1.5]]))
            r[2].bias.copy_(torch.tensor([0.2]))
            r[4].weight.copy_(torch.tensor([[1.0]]))
            r[4].bias.copy_(torch.tensor([-0.05]))
        w, zw = 0.3, 0.25
        out = dyn.step(torch.tensor([[w]]), torch.tensor([[zw]]))
        h1 = max(0.0, w + 2.0 * zw)
        h2 = max(0.0, 1.5 * h1 + 0.2)
        expected = w + h2 - 0.05
        assert out.item() == pytest.approx(expected, abs=1e-7)


class TestSupervisionLoss:
    def test_equal_is_zero(self):
        z = torch.rand(1, 5, 3)
        assert float(transition_supervision_loss(z, z.clone())) == 0.0

    def test_single_pair_euclidean(self):
        pred = torch.zeros(1, 2)
        teacher = torch.tensor([[3.0, 4.0]])
        assert float(transition_supervision_loss(pred, teacher)) == pytest.approx(5.0)

    def test_sums_over_time(self):
        pred = torch.zeros(2, 2)
        teacher = torch.tensor([[1.0, 0.0], [0.0, 2.0]])
        assert float(transition_supervision_loss(pred, teacher)) == pytest.approx(3.0)

    def test_batched_mean(self):
        pred = torch.zeros(2, 1, 2)
        teacher = torch.tensor([[[3.0, 4.0]], [[0.0, 1.0]]])
        assert float(transition_supervision_loss(pred, teacher)) == pytest.approx(3.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            transition_supervision_loss(torch.zeros(2, 3), torch.zeros(3, 3))

    def test_teacher_is_detached(self):
        pred = torch.zeros(1, 2, requires_grad=True)
        teacher = torch.ones(1, 2, requires_grad=True)
        transition_supervision_loss(pred, teacher).backward()
        assert pred.grad is not None and pred.grad.abs().sum() > 0
        assert teacher.grad is None


class TestNoStochasticity:
    def test_bit_identical_invocations(self):
        dyn = make_dynamics()
        h = torch.rand(2, 5, 4)
        z1, _ = dyn.infer_transitions(h)
        z2, _ = dyn.infer_transitions(h)
        w = torch.rand(2, 4)
        assert torch.equal(z1, z2)
        assert torch.equal(dyn.predict_transition(w), dyn.predict_transition(w))
        assert torch.equal(dyn.step(w, z1[:, 0]), dyn.step(w, z2[:, 0]))
