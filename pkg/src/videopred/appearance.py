"""Deterministic appearance branch: recurrent inference of appearance
transitions, a test-time transition predictor, and the residual state update.

Nothing in this module samples; two identical invocations are bit-identical.
"""
from __future__ import annotations

import torch
import torch.nn as nn
from torch import Tensor

from .motion import residual_mlp


class AppearanceDynamics(nn.Module):
    def __init__(self, d_w: int, d_zw: int, rnn_width: int = 128, hidden: int = 128):
        super().__init__()
        self.d_w, self.d_zw = d_w, d_zw
        self.recurrence = nn.LSTM(d_w, rnn_width, batch_first=True)
        self.transition_head = nn.Linear(rnn_width, d_zw)
        self.predictor = nn.Sequential(
            nn.Linear(d_w, hidden),
            nn.ReLU(inplace=True),
            nn.Linear(hidden, d_zw),
        )
        self.residual = residual_mlp(d_w + d_zw, d_w, hidden)

    def infer_transitions(self, h_w: Tensor, state=None) -> tuple[Tensor, tuple]:
        """Teacher transitions from observed appearance features.

        [B, T, d_w] with T >= 2 -> ([B, T-1, d_zw], final LSTM state); output
        index t-2 is the transition into frame t and depends on features 1..t
        only."""
        if h_w.dim() != 3 or h_w.shape[1] < 2:
            raise ValueError(
                f"need at least two appearance features, got {tuple(h_w.shape)}"
            )
        out, state = self.recurrence(h_w, state)
        return self.transition_head(out[:, 1:]), state

    def predict_transition(self, w: Tensor) -> Tensor:
        """Test-time transition into the next frame, predicted from the
        current appearance state alone."""
        return self.predictor(w)

    def step(self, w: Tensor, z_w: Tensor) -> Tensor:
        """Residual update w + MLP([w, z_w])."""
        return w + self.residual(torch.cat([w, z_w], dim=-1))


def transition_supervision_loss(z_pred: Tensor, z_teacher: Tensor) -> Tensor:
    """Sum over time of Euclidean norms ||teacher - predicted||_2.

    The teacher is detached: the predictor chases the recurrence, never the
    other way around. Accepts [T, d] or [B, T, d]; batched input returns the
    per-sequence mean."""
    if z_pred.shape != z_teacher.shape:
        raise ValueError(
            f"shape mismatch: {tuple(z_pred.shape)} vs {tuple(z_teacher.shape)}"
        )
    diff = z_teacher.detach() - z_pred
    per_step = torch.linalg.vector_norm(diff, dim=-1)
    total = per_step.sum(dim=-1)
    return total.mean() if total.dim() else total
