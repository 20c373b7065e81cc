import pytest
import torch

from videopred.config import RunConfig

torch.set_num_threads(2)


@pytest.fixture
def micro_config() -> RunConfig:
    """Smallest config that exercises every path: 2x2 images, all latent dims
    <= 4, T = k + 1 = 3."""
    return RunConfig(
        d_y=4, d_z=3, d_g=4, d_w=4, d_zw=3, d_h=4,
        rnn_width=4, hidden_width=4, base_channels=4,
        vit_depth=1, vit_heads=2, tt_width=4, tt_depth=1, tt_heads=2,
        image_size=2, channels=1, patch_size=1,
        k=2, train_horizon=1, eval_horizon=2,
        batch_size=2, steps=2, sigma_obs=0.5,
    )


@pytest.fixture
def tiny_config() -> RunConfig:
    """Small-but-realistic config for fast training smoke tests at 16 px."""
    return RunConfig(
        d_y=8, d_z=4, d_g=4, d_w=8, d_zw=4, d_h=16,
        rnn_width=16, hidden_width=16, base_channels=4,
        vit_depth=1, vit_heads=2, tt_width=8, tt_depth=1, tt_heads=2,
        image_size=16, channels=1, patch_size=8,
        k=2, train_horizon=3, eval_horizon=3,
        batch_size=2, steps=3, val_every=2, checkpoint_every=100,
    )


def seeded(seed: int) -> torch.Generator:
    return torch.Generator().manual_seed(seed)
