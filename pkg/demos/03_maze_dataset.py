"""Collect maze trajectories and apply the reward/dataset transforms.

Run: python demos/03_maze_dataset.py
"""

import os
import tempfile

import numpy as np

from sigstream.data import (
    collect_dataset,
    delayed_reward_dataset,
    downgrade_dataset,
    load_dataset,
    save_dataset,
)
from sigstream.maze import builtin_maze

spec = builtin_maze("u")
print("U-maze grid (# wall, S start, G goal):")
chars = np.where(spec.walls, "#", ".")
chars[spec.start_cell] = "S"
chars[spec.goal_cell] = "G"
print("\n".join("".join(row) for row in chars))

# Half the episodes head straight for the goal, half wander between
# random targets: a desk-scale stand-in for replay-style offline data.
ds = collect_dataset(spec, episodes=100, noise=1.5, seed=0, wander=0.5)
lens = [t.steps for t in ds.trajectories]
print(f"\n100 episodes: success rate {ds.success_rate():.2f}, "
      f"steps min/mean/max = {min(lens)}/{np.mean(lens):.0f}/{max(lens)}")
print(f"state mean {np.round(ds.state_mean, 2)}, std {np.round(ds.state_std, 2)}")

delayed = delayed_reward_dataset(ds)
t = delayed.trajectories[0]
print(f"\ndelayed rewards: first episode rewards nonzero only at the end -> "
      f"{t.rewards[:-1].any()} / final = {t.rewards[-1]}")

for pct in (0, 20, 50):
    down = downgrade_dataset(ds, pct)
    print(f"downgrade {pct:2d}%: kept {len(down):3d} episodes, "
          f"success rate in data {down.success_rate():.2f}")

with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "demo.sigdata")
    save_dataset(ds, path)
    back = load_dataset(path)
    print(f"\nsaved and reloaded: {len(back)} episodes, "
          f"{os.path.getsize(path)} bytes, metadata {back.metadata}")
