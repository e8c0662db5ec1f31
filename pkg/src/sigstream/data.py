"""Offline trajectory datasets: scripted collection, transforms, persistence.

Episodes are rolled out with a waypoint PD controller that follows the
BFS shortest cell path from its spawn cell to the goal, with optional
Gaussian action noise. The file format is little-endian binary: an 8-byte
magic, a u32 version, a length-prefixed JSON metadata blob, then
length-prefixed trajectory blocks of float64 arrays, so files are
bit-exact across platforms and trivially parseable elsewhere.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import maze as maze_mod
from .errors import DataFormatError, GenerationError
from .maze import EnvState, MazeSpec

MAGIC = b"SIGDATA\x00"
FORMAT_VERSION = 1

STATE_DIM = 4
ACTION_DIM = 2


@dataclass
class Trajectory:
    """One episode: states (L+1, 4), actions (L, 2), rewards (L,)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: bool  # True when the episode ended at the goal

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64).ravel()
        if len(self.actions) != len(self.rewards) or len(self.states) != len(self.actions) + 1:
            raise ValueError(
                f"inconsistent lengths: {len(self.states)} states, "
                f"{len(self.actions)} actions, {len(self.rewards)} rewards"
            )

    @property
    def steps(self) -> int:
        return len(self.actions)

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())


@dataclass
class Dataset:
    """Trajectories plus normalization statistics and provenance metadata.

    Statistics are always recomputed from the contained trajectories.
    """

    trajectories: list[Trajectory]
    metadata: dict = field(default_factory=dict)
    state_mean: np.ndarray = field(init=False)
    state_std: np.ndarray = field(init=False)
    action_mean: np.ndarray = field(init=False)
    action_std: np.ndarray = field(init=False)

    def __post_init__(self):
        states = np.concatenate([t.states for t in self.trajectories])
        actions = np.concatenate([t.actions for t in self.trajectories])
        self.state_mean = states.mean(axis=0)
        self.state_std = states.std(axis=0)
        self.action_mean = actions.mean(axis=0)
        self.action_std = actions.std(axis=0)

    def __len__(self) -> int:
        return len(self.trajectories)

    def returns(self) -> np.ndarray:
        return np.array([t.total_return for t in self.trajectories])

    def success_rate(self) -> float:
        return float(np.mean([t.terminal for t in self.trajectories]))


# --------------------------------------------------------------- policies


def _cells_within(spec: MazeSpec, cell: tuple[int, int], hops: int) -> set[tuple[int, int]]:
    """Open cells within a BFS distance of `hops` from `cell` (inclusive)."""
    frontier = {cell}
    seen = {cell}
    for _ in range(hops):
        nxt = set()
        for r, c in frontier:
            for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                n = (r + dr, c + dc)
                if n not in seen and not spec.is_wall(*n):
                    nxt.add(n)
                    seen.add(n)
        frontier = nxt
    return seen


class WaypointPolicy:
    """PD controller chasing a BFS shortest cell path.

    By default the path leads to the maze goal. With probability
    wander_prob an episode instead chases uniformly random target cells,
    re-targeting whenever one is reached — the desk-scale stand-in for
    replay-style data whose per-state action distribution is multimodal.
    Gaussian noise of scale `noise` is added to the acceleration before
    clipping; waypoints advance once within advance_radius.
    """

    def __init__(self, spec: MazeSpec, noise: float = 0.0, kp: float = 4.0, kd: float = 3.0,
                 advance_radius: float = 0.4, wander_prob: float = 0.0,
                 dwell_steps: tuple[int, int] = (0, 0), goal_buffer: int = 1):
        self.spec = spec
        self.noise = noise
        self.kp = kp
        self.kd = kd
        self.advance_radius = advance_radius * spec.scale
        self.wander_prob = wander_prob
        self.dwell_steps = dwell_steps
        # Wander targets keep goal_buffer BFS hops away from the goal:
        # exploration data covers the maze, but the final approach is
        # demonstrated only by goal-directed episodes, keeping the two
        # behavior modes distinct where it matters.
        near_goal = _cells_within(spec, spec.goal_cell, goal_buffer)
        self._open_cells = [c for c in spec.open_cells() if c not in near_goal]
        if not self._open_cells:
            self._open_cells = [c for c in spec.open_cells() if c != spec.goal_cell]
        self._waypoints: list[np.ndarray] = []
        self._idx = 0
        self._wandering = False
        self._dwell = 0
        self._rng: np.random.Generator | None = None

    def _plan(self, from_cell: tuple[int, int], target: tuple[int, int]) -> None:
        cells = maze_mod.shortest_cell_path(self.spec.walls, from_cell, target)
        if cells is None:
            raise GenerationError(
                f"target {target} unreachable from cell {from_cell} in maze {self.spec.name!r}"
            )
        self._waypoints = [self.spec.cell_center(c) for c in cells]
        self._idx = 0

    def _random_target(self) -> tuple[int, int]:
        return self._open_cells[int(self._rng.integers(len(self._open_cells)))]

    def begin_episode(self, state: EnvState, rng: np.random.Generator) -> None:
        self._rng = rng
        self._dwell = None  # None = not pausing; int = remaining pause steps
        cell = self.spec.cell_of(state.position)
        self._wandering = self.wander_prob > 0.0 and rng.uniform() < self.wander_prob
        self._plan(cell, self._random_target() if self._wandering else self.spec.goal_cell)

    def act(self, state: EnvState) -> np.ndarray:
        while (
            self._idx + 1 < len(self._waypoints)
            and np.linalg.norm(state.position - self._waypoints[self._idx]) < self.advance_radius
        ):
            self._idx += 1
        at_target = (
            self._idx == len(self._waypoints) - 1
            and np.linalg.norm(state.position - self._waypoints[self._idx]) < self.advance_radius
        )
        if self._wandering and at_target:
            if self._dwell is None:
                lo, hi = self.dwell_steps
                pause = int(self._rng.integers(lo, hi + 1)) if hi > 0 else 0
                if pause > 0:
                    self._dwell = pause
                else:
                    self._plan(self.spec.cell_of(state.position), self._random_target())
            else:
                self._dwell -= 1
                if self._dwell <= 0:
                    self._dwell = None
                    self._plan(self.spec.cell_of(state.position), self._random_target())
        target = self._waypoints[self._idx]
        a = self.kp * (target - state.position) - self.kd * state.velocity
        if self.noise > 0.0:
            a = a + self._rng.normal(0.0, self.noise, size=2)
        return np.clip(a, -self.spec.amax, self.spec.amax)


def run_episode(
    spec: MazeSpec,
    policy,
    rng: np.random.Generator,
    start_mode: str = "random",
    record_distance: bool = False,
) -> tuple[Trajectory, np.ndarray | None]:
    """Roll one episode; the shared harness for collection and evaluation.

    The RNG drives, in order, the reset jitter and then any policy noise,
    so a (seed, policy) pair reproduces an episode bit-exactly.
    """
    state = maze_mod.reset(spec, rng, start_mode)
    policy.begin_episode(state, rng)
    states = [state.observation()]
    actions, rewards, distances = [], [], []
    if record_distance:
        distances.append(maze_mod.distance_to_goal(spec, state.position))
    terminal = False
    while True:
        action = np.asarray(policy.act(state), dtype=np.float64)
        state, reward, done = maze_mod.step(spec, state, action)
        states.append(state.observation())
        actions.append(action)
        rewards.append(reward)
        if record_distance:
            distances.append(maze_mod.distance_to_goal(spec, state.position))
        if done:
            terminal = reward > 0.0
            break
    traj = Trajectory(
        states=np.asarray(states),
        actions=np.asarray(actions),
        rewards=np.asarray(rewards),
        terminal=terminal,
    )
    return traj, (np.asarray(distances) if record_distance else None)


def collect_dataset(
    spec: MazeSpec,
    episodes: int,
    noise: float = 0.0,
    seed: int = 0,
    start_mode: str = "random",
    wander: float = 0.0,
    dwell_steps: tuple[int, int] = (0, 0),
) -> Dataset:
    """Collect episodes with the waypoint PD policy; seed-reproducible.

    wander is the probability an episode chases random (non-goal) targets
    instead of the goal; rewards are still computed against the true goal
    by the environment. dwell_steps=(lo, hi) makes wandering episodes
    pause at each reached target for a random number of steps,
    replay-style idling.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    policy = WaypointPolicy(spec, noise=noise, wander_prob=wander, dwell_steps=dwell_steps)
    children = np.random.SeedSequence(seed).spawn(episodes)
    trajectories = []
    for child in children:
        traj, _ = run_episode(spec, policy, np.random.default_rng(child), start_mode=start_mode)
        trajectories.append(traj)
    metadata = {
        "maze": spec.name,
        "policy": "waypoint_pd",
        "episodes": episodes,
        "noise": noise,
        "seed": seed,
        "start_mode": start_mode,
        "wander": wander,
        "dwell_steps": list(dwell_steps),
    }
    return Dataset(trajectories=trajectories, metadata=metadata)


# --------------------------------------------------------------- transforms


def delayed_reward_variant(traj: Trajectory) -> Trajectory:
    """Move the whole return to the final step; zeros elsewhere."""
    rewards = np.zeros_like(traj.rewards)
    if len(rewards):
        rewards[-1] = traj.rewards.sum()
    return Trajectory(
        states=traj.states.copy(),
        actions=traj.actions.copy(),
        rewards=rewards,
        terminal=traj.terminal,
    )


def delayed_reward_dataset(ds: Dataset) -> Dataset:
    meta = dict(ds.metadata, delayed_reward=True)
    return Dataset([delayed_reward_variant(t) for t in ds.trajectories], metadata=meta)


def downgrade_dataset(ds: Dataset, percent: float) -> Dataset:
    """Drop the top percent% of trajectories by return (stable ties)."""
    if not 0 <= percent < 100:
        raise ValueError(f"percent must be in [0, 100), got {percent}")
    n_remove = int(np.ceil(percent / 100.0 * len(ds.trajectories)))
    order = np.argsort(-ds.returns(), kind="stable")
    removed = set(order[:n_remove].tolist())
    kept = [t for i, t in enumerate(ds.trajectories) if i not in removed]
    meta = dict(ds.metadata, downgrade_percent=percent)
    return Dataset(kept, metadata=meta)


# --------------------------------------------------------------- persistence


def _write_block(fh, payload: bytes) -> None:
    fh.write(struct.pack("<I", len(payload)))
    fh.write(payload)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        meta = json.dumps(ds.metadata, sort_keys=True, separators=(",", ":")).encode("utf-8")
        _write_block(fh, meta)
        fh.write(struct.pack("<I", len(ds.trajectories)))
        for traj in ds.trajectories:
            fh.write(
                struct.pack(
                    "<IIIB",
                    traj.steps,
                    traj.states.shape[1],
                    traj.actions.shape[1],
                    1 if traj.terminal else 0,
                )
            )
            fh.write(traj.states.astype("<f8").tobytes())
            fh.write(traj.actions.astype("<f8").tobytes())
            fh.write(traj.rewards.astype("<f8").tobytes())


def _read_exact(fh, size: int) -> bytes:
    data = fh.read(size)
    if len(data) != size:
        raise DataFormatError(f"truncated file: wanted {size} bytes, got {len(data)}")
    return data


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise DataFormatError("not a dataset file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise DataFormatError(f"unsupported dataset version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4))
        metadata = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        (n_traj,) = struct.unpack("<I", _read_exact(fh, 4))
        trajectories = []
        for _ in range(n_traj):
            steps, sd, ad, terminal = struct.unpack("<IIIB", _read_exact(fh, 13))
            states = np.frombuffer(_read_exact(fh, (steps + 1) * sd * 8), dtype="<f8").reshape(steps + 1, sd)
            actions = np.frombuffer(_read_exact(fh, steps * ad * 8), dtype="<f8").reshape(steps, ad)
            rewards = np.frombuffer(_read_exact(fh, steps * 8), dtype="<f8")
            trajectories.append(
                Trajectory(
                    states=states.copy(),
                    actions=actions.copy(),
                    rewards=rewards.copy(),
                    terminal=bool(terminal),
                )
            )
        trailing = fh.read(1)
        if trailing:
            raise DataFormatError("trailing bytes after the last trajectory block")
    return Dataset(trajectories=trajectories, metadata=metadata)
