"""Named hyperparameter profiles.

"desk" runs in minutes on a laptop CPU; "paper" mirrors the full-scale
defaults (4 layers, 4 heads, embed 128, batch 256, context 20 for the
maze task, linear warmup over the first 10 epochs).
"""

from __future__ import annotations

from dataclasses import replace

from .model import ModelConfig, TrainConfig
from .signature import ChannelSpec
from .tokens import TokenizerConfig

# Position (x, y) and velocity (vx, vy) channels, split by physical meaning.
MAZE_CHANNELS = ChannelSpec.of([0, 1], [2, 3])


def tokenizer_profile(name: str, mode: str = "isc") -> TokenizerConfig:
    if name == "desk":
        return TokenizerConfig(context_len=12, channels=MAZE_CHANNELS, depth=2, mode=mode)
    if name == "paper":
        return TokenizerConfig(context_len=20, channels=MAZE_CHANNELS, depth=2, mode=mode)
    raise ValueError(f"unknown profile {name!r}")


def model_profile(name: str) -> ModelConfig:
    if name == "desk":
        return ModelConfig(embed_dim=32, num_layers=2, num_heads=2, dropout=0.1, max_context=12)
    if name == "paper":
        return ModelConfig(embed_dim=128, num_layers=4, num_heads=4, dropout=0.1, max_context=20)
    raise ValueError(f"unknown profile {name!r}")


def train_profile(name: str, seed: int = 0) -> TrainConfig:
    if name == "desk":
        return TrainConfig(epochs=40, batch_size=64, lr=1e-3, weight_decay=0.01,
                           grad_clip=1.0, warmup_epochs=4, seed=seed)
    if name == "paper":
        return TrainConfig(epochs=80, batch_size=256, lr=1e-3, weight_decay=0.01,
                           grad_clip=1.0, warmup_epochs=10, seed=seed)
    raise ValueError(f"unknown profile {name!r}")


def with_seed(cfg: TrainConfig, seed: int) -> TrainConfig:
    return replace(cfg, seed=seed)
