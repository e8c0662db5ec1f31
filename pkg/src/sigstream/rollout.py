"""Closed-loop evaluation: roll a policy in the maze with streaming ISC.

The model policy keeps per-group signature streams over the episode so
each new observation costs O(Σ d^k) regardless of episode length, builds
the rolling window of the last T steps (shorter early on), fixes the GOAL
token to the supplied target, and acts on the prediction for the newest
step. The same harness runs scripted policies, which is how the collector
and the evaluator are cross-checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import Trajectory, WaypointPolicy, run_episode
from .maze import EnvState, MazeSpec
from .model import SequencePolicyModel
from .signature import SignatureState
from .tokens import (
    TokenizerConfig,
    WindowSample,
    correlation_features,
    window_signature,
)


@dataclass
class EvalReport:
    episodes: int
    success_rate: float
    mean_path_length: float  # traveled distance, world units
    mean_return: float
    mean_steps: float
    successes: list[bool] = field(default_factory=list)
    path_lengths: list[float] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    distance_curves: list[np.ndarray] = field(default_factory=list)


def traveled_length(traj: Trajectory) -> float:
    return float(np.linalg.norm(np.diff(traj.states[:, :2], axis=0), axis=1).sum())


class ModelPolicy:
    """Wraps a trained model as an environment policy."""

    def __init__(
        self,
        model: SequencePolicyModel,
        tok_cfg: TokenizerConfig,
        goal_target: float,
        action_limit: float | None = None,
    ):
        self.model = model
        self.cfg = tok_cfg
        self.goal_target = float(goal_target)
        self.action_limit = action_limit
        self._dtype = next(model.parameters()).dtype
        self._groups = [list(g) for g in tok_cfg.channels.groups]
        self._reset_buffers()

    def _reset_buffers(self):
        self._states: list[np.ndarray] = []
        self._actions: list[np.ndarray] = []
        self._sig_states = [SignatureState(len(g), 2) for g in self._groups]
        self._inc_rows = [[] for _ in self._groups]
        self._cross_rows = [[] for _ in self._groups]

    def begin_episode(self, state: EnvState, rng: np.random.Generator) -> None:
        self._reset_buffers()

    def act(self, state: EnvState) -> np.ndarray:
        obs = state.observation()
        if self.cfg.mode in ("isc", "correlation"):
            if self._states:
                prev = self._states[-1]
                for g, (idx, sig) in enumerate(zip(self._groups, self._sig_states)):
                    rec = sig.update(obs[idx] - prev[idx]).contribution()
                    self._inc_rows[g].append(rec.level(1))
                    self._cross_rows[g].append(rec.level(2))
            else:
                for g, idx in enumerate(self._groups):
                    self._inc_rows[g].append(np.zeros(len(idx)))
                    self._cross_rows[g].append(np.zeros(len(idx) ** 2))
        self._states.append(obs)

        T = self.cfg.context_len
        steps = min(len(self._states), T)
        lo = len(self._states) - steps
        action_dim = self.model.layout.action_dim
        window_actions = np.zeros((steps, action_dim))
        for t in range(steps - 1):
            window_actions[t] = self._actions[lo + t]
        prev_action = self._actions[lo - 1] if lo > 0 else np.zeros(action_dim)

        window = WindowSample(
            start=lo,
            states=np.asarray(self._states[lo:]),
            prev_action=prev_action,
            actions=window_actions,
            rewards=np.zeros(steps),
        )
        if self.cfg.mode in ("isc", "correlation"):
            window.inc = tuple(np.asarray(rows[lo:]) for rows in self._inc_rows)
            window.cross = tuple(np.asarray(rows[lo:]) for rows in self._cross_rows)
        else:
            window.window_sig = window_signature(window.states, self.cfg.depth)

        batch = window_batch(window, self.cfg, self.goal_target, self._dtype)
        with torch.no_grad():
            _, preds = self.model(batch)
        action = preds[0, -1].numpy().astype(np.float64)
        if self.action_limit is not None:
            action = np.clip(action, -self.action_limit, self.action_limit)
        self._actions.append(action)
        return action


def window_batch(
    window: WindowSample,
    cfg: TokenizerConfig,
    goal_value: float,
    dtype: torch.dtype = torch.float32,
) -> dict:
    """Single-window model input with the GOAL payload fixed to a target."""
    steps = window.steps

    def t(a):
        return torch.as_tensor(np.asarray(a)[None], dtype=dtype)

    batch = {
        "goal": t([goal_value]),
        "prev_action": t(window.prev_action),
        "obs": t(window.states[:steps]),
        "act_in": t(window.actions),
        "targets": t(window.actions),
    }
    if cfg.mode == "isc":
        if cfg.channel_token_mode == "concat":
            batch["inc"] = (t(np.concatenate(window.inc, axis=1)),)
            batch["cross"] = (t(np.concatenate(window.cross, axis=1)),)
        else:
            batch["inc"] = tuple(t(rows) for rows in window.inc)
            batch["cross"] = tuple(t(rows) for rows in window.cross)
    elif cfg.mode == "correlation":
        inc_slots, cross_slots = correlation_features(window, cfg)
        batch["inc"] = tuple(t(rows) for rows in inc_slots)
        batch["cross"] = tuple(t(rows) for rows in cross_slots)
    else:
        batch["inc"] = ()
        batch["cross"] = ()
        batch["sig"] = t(window.window_sig)
    return batch


def evaluate_policy(
    policy,
    spec: MazeSpec,
    episodes: int,
    seed: int = 0,
    start_mode: str = "fixed",
) -> EvalReport:
    """Run episodes through the shared harness and aggregate the results."""
    successes, lengths, returns, steps, curves = [], [], [], [], []
    children = np.random.SeedSequence(seed).spawn(episodes) if episodes > 0 else []
    for child in children:
        traj, distances = run_episode(
            spec, policy, np.random.default_rng(child), start_mode=start_mode, record_distance=True
        )
        successes.append(traj.terminal)
        lengths.append(traveled_length(traj))
        returns.append(traj.total_return)
        steps.append(traj.steps)
        curves.append(distances)
    if episodes == 0:
        return EvalReport(0, float("nan"), float("nan"), float("nan"), float("nan"))
    return EvalReport(
        episodes=episodes,
        success_rate=float(np.mean(successes)),
        mean_path_length=float(np.mean(lengths)),
        mean_return=float(np.mean(returns)),
        mean_steps=float(np.mean(steps)),
        successes=successes,
        path_lengths=lengths,
        returns=returns,
        steps=steps,
        distance_curves=curves,
    )


def evaluate_model(
    model: SequencePolicyModel,
    tok_cfg: TokenizerConfig,
    spec: MazeSpec,
    goal_target: float,
    episodes: int,
    seed: int = 0,
    start_mode: str = "fixed",
) -> EvalReport:
    policy = ModelPolicy(model, tok_cfg, goal_target, action_limit=spec.amax)
    return evaluate_policy(policy, spec, episodes, seed=seed, start_mode=start_mode)


def scripted_policy(spec: MazeSpec, noise: float = 0.0) -> WaypointPolicy:
    """The collector's oracle policy, exposed for harness self-tests."""
    return WaypointPolicy(spec, noise=noise)
