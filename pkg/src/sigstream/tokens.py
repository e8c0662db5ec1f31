"""Trajectory windows to typed token sequences.

A window of T steps becomes the sequence

    [GOAL, PREV_ACTION, (OBS_0, INC_0, CROSS_0, ACT_0), ..., (OBS_{T-1}, ...)]

where the INC/CROSS payloads at step t are the level-1/level-2 incremental
signature contributions of the increment *arriving at* x_t (x_t - x_{t-1}),
streamed from the trajectory beginning, so every step-t token is a function
of the history up to x_t. At a trajectory's first step there is no
predecessor and the record is exactly zero, mirroring the zero PREV_ACTION
padding. GOAL is the window's reward sum divided by goal_scale and is the
single token allowed to look ahead.

Two ablation modes reshape the sequence: ``correlation`` swaps INC/CROSS
payloads for running mean / running covariance of the window's increments
(width-matched to the ISC payloads and rescaled to their per-feature
spread), and ``full_signature`` drops the per-step INC/CROSS tokens in
favor of one whole-window signature token after PREV_ACTION.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import algebra
from .errors import ConfigError, ShapeMismatchError
from .signature import ChannelSpec, signature_batch

MODES = ("isc", "correlation", "full_signature")
CHANNEL_TOKEN_MODES = ("concat", "per_channel")


class TokenKind(IntEnum):
    GOAL = 0
    PREV_ACTION = 1
    OBS = 2
    INC = 3
    CROSS = 4
    ACT = 5
    SIG = 6


@dataclass(frozen=True)
class CorrelationScaler:
    """Affine per-feature map aligning correlation features to ISC scale.

    transformed = (raw - mean) * scale, with scale = std(ISC) / std(raw)
    (0 where the raw feature is constant). Entries align with the layout's
    INC and CROSS slots.
    """

    inc_mean: tuple[np.ndarray, ...]
    inc_scale: tuple[np.ndarray, ...]
    cross_mean: tuple[np.ndarray, ...]
    cross_scale: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {
            "inc_mean": [a.tolist() for a in self.inc_mean],
            "inc_scale": [a.tolist() for a in self.inc_scale],
            "cross_mean": [a.tolist() for a in self.cross_mean],
            "cross_scale": [a.tolist() for a in self.cross_scale],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CorrelationScaler":
        as_arrays = lambda key: tuple(np.asarray(a, dtype=np.float64) for a in d[key])
        return cls(
            inc_mean=as_arrays("inc_mean"),
            inc_scale=as_arrays("inc_scale"),
            cross_mean=as_arrays("cross_mean"),
            cross_scale=as_arrays("cross_scale"),
        )


@dataclass(frozen=True)
class TokenizerConfig:
    """How trajectory windows are turned into token sequences."""

    context_len: int
    channels: ChannelSpec
    depth: int = 2
    mode: str = "isc"
    channel_token_mode: str = "concat"
    goal_scale: float = 1.0
    corr_scaler: CorrelationScaler | None = None

    def __post_init__(self):
        if self.context_len < 1:
            raise ConfigError(f"context_len must be >= 1, got {self.context_len}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if self.channel_token_mode not in CHANNEL_TOKEN_MODES:
            raise ConfigError(
                f"unknown channel_token_mode {self.channel_token_mode!r}"
            )
        if self.mode in ("isc", "correlation") and self.depth < 2:
            raise ConfigError(f"mode {self.mode!r} emits CROSS tokens and needs depth >= 2")
        if self.depth < 1:
            raise ConfigError(f"depth must be >= 1, got {self.depth}")
        if not self.goal_scale > 0:
            raise ConfigError(f"goal_scale must be positive, got {self.goal_scale}")

    def to_dict(self) -> dict:
        return {
            "context_len": self.context_len,
            "channels": [list(g) for g in self.channels.groups],
            "depth": self.depth,
            "mode": self.mode,
            "channel_token_mode": self.channel_token_mode,
            "goal_scale": self.goal_scale,
            "corr_scaler": None if self.corr_scaler is None else self.corr_scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenizerConfig":
        scaler = d.get("corr_scaler")
        return cls(
            context_len=int(d["context_len"]),
            channels=ChannelSpec.of(*d["channels"]),
            depth=int(d["depth"]),
            mode=d["mode"],
            channel_token_mode=d["channel_token_mode"],
            goal_scale=float(d["goal_scale"]),
            corr_scaler=None if scaler is None else CorrelationScaler.from_dict(scaler),
        )


@dataclass(frozen=True)
class SlotSpec:
    """One token slot of the layout: what it is and how wide it is."""

    kind: TokenKind
    channel_id: int  # 0 when not applicable; per_channel INC/CROSS use group+1
    width: int


@dataclass(frozen=True)
class TokenLayout:
    """Published token layout: slot order, payload widths, read positions."""

    mode: str
    channel_token_mode: str
    context_len: int
    state_dim: int
    action_dim: int
    depth: int
    group_dims: tuple[int, ...]
    header: tuple[SlotSpec, ...]
    per_step: tuple[SlotSpec, ...]

    @property
    def header_len(self) -> int:
        return len(self.header)

    @property
    def step_width(self) -> int:
        return len(self.per_step)

    def seq_len(self, steps: int | None = None) -> int:
        steps = self.context_len if steps is None else steps
        return self.header_len + steps * self.step_width

    @property
    def act_offset(self) -> int:
        return next(i for i, s in enumerate(self.per_step) if s.kind == TokenKind.ACT)

    @property
    def read_offset(self) -> int:
        """Slot of per_step whose latent decodes the step's action (the
        token immediately preceding ACT)."""
        return self.act_offset - 1

    def read_positions(self, steps: int | None = None) -> np.ndarray:
        steps = self.context_len if steps is None else steps
        return self.header_len + np.arange(steps) * self.step_width + self.read_offset

    def widths(self) -> dict[tuple[str, int], int]:
        table: dict[tuple[str, int], int] = {}
        for slot in self.header + self.per_step:
            table[(slot.kind.name, slot.channel_id)] = slot.width
        return table

    @property
    def num_channel_ids(self) -> int:
        return 1 + max(s.channel_id for s in self.header + self.per_step)

    def slot_ids(self, steps: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """type_ids, channel_ids, position_ids per sequence position.

        Header tokens sit at position 0; step-t tokens at position t.
        """
        steps = self.context_len if steps is None else steps
        types, channels, positions = [], [], []
        for slot in self.header:
            types.append(int(slot.kind))
            channels.append(slot.channel_id)
            positions.append(0)
        for t in range(steps):
            for slot in self.per_step:
                types.append(int(slot.kind))
                channels.append(slot.channel_id)
                positions.append(t)
        return (
            np.asarray(types, dtype=np.int64),
            np.asarray(channels, dtype=np.int64),
            np.asarray(positions, dtype=np.int64),
        )

    def describe(self) -> str:
        """Layout table as a small structured text document (golden-testable)."""
        lines = [
            f"mode={self.mode} channel_token_mode={self.channel_token_mode} "
            f"context_len={self.context_len} state_dim={self.state_dim} "
            f"action_dim={self.action_dim} depth={self.depth} "
            f"groups={'|'.join(str(d) for d in self.group_dims)}",
            "pos\tkind\tchannel\tstep\twidth",
        ]
        pos = 0
        for slot in self.header:
            lines.append(f"{pos}\t{slot.kind.name}\t{slot.channel_id}\t-\t{slot.width}")
            pos += 1
        for t in range(self.context_len):
            for slot in self.per_step:
                lines.append(f"{pos}\t{slot.kind.name}\t{slot.channel_id}\t{t}\t{slot.width}")
                pos += 1
        return "\n".join(lines) + "\n"


def token_dims(cfg: TokenizerConfig, state_dim: int, action_dim: int) -> TokenLayout:
    """Publish the layout (slot order and payload widths) for a config."""
    cfg.channels.validate_dim(state_dim)
    gdims = cfg.channels.group_dims()

    header = [
        SlotSpec(TokenKind.GOAL, 0, 1),
        SlotSpec(TokenKind.PREV_ACTION, 0, action_dim),
    ]
    if cfg.mode == "full_signature":
        sig_width = sum(state_dim**k for k in range(1, cfg.depth + 1))
        header.append(SlotSpec(TokenKind.SIG, 0, sig_width))
        per_step = [
            SlotSpec(TokenKind.OBS, 0, state_dim),
            SlotSpec(TokenKind.ACT, 0, action_dim),
        ]
    else:
        per_step = [SlotSpec(TokenKind.OBS, 0, state_dim)]
        if cfg.channel_token_mode == "concat":
            per_step.append(SlotSpec(TokenKind.INC, 0, sum(gdims)))
            per_step.append(SlotSpec(TokenKind.CROSS, 0, sum(d * d for d in gdims)))
        else:
            for g, d in enumerate(gdims):
                per_step.append(SlotSpec(TokenKind.INC, g + 1, d))
            for g, d in enumerate(gdims):
                per_step.append(SlotSpec(TokenKind.CROSS, g + 1, d * d))
        per_step.append(SlotSpec(TokenKind.ACT, 0, action_dim))

    return TokenLayout(
        mode=cfg.mode,
        channel_token_mode=cfg.channel_token_mode,
        context_len=cfg.context_len,
        state_dim=state_dim,
        action_dim=action_dim,
        depth=cfg.depth,
        group_dims=gdims,
        header=tuple(header),
        per_step=tuple(per_step),
    )


def goal_token(rewards_in_window, goal_scale: float = 1.0) -> float:
    """Sum of the window's rewards, divided by the goal normalizer."""
    rewards = np.asarray(rewards_in_window, dtype=np.float64)
    return float(rewards.sum()) / goal_scale


# --------------------------------------------------------------- ISC caching


@dataclass(frozen=True)
class IscCache:
    """Per-trajectory streamed contributions, one row per observed state.

    Row n holds the level-1 / level-2 contribution of the increment ending
    at x_n (row 0 is all zeros: the first state arrives without motion).
    """

    inc: tuple[np.ndarray, ...]    # per group, (L+1, |g|)
    cross: tuple[np.ndarray, ...]  # per group, (L+1, |g|^2)


def isc_cache(states, channels: ChannelSpec) -> IscCache:
    """Stream the whole trajectory once; used to warm-start every window.

    Levels 1 and 2 of a contribution do not depend on the stream's
    truncation depth, so a depth-2 stream serves any tokenizer depth.
    """
    states = np.asarray(states, dtype=np.float64)
    channels.validate_dim(states.shape[1])
    inc_rows, cross_rows = [], []
    for grp in channels.groups:
        x = states[:, list(grp)]
        w = x.shape[1]
        deltas = np.diff(x, axis=0)  # (L, w)
        prefix = np.vstack([np.zeros(w), np.cumsum(deltas, axis=0)[:-1]]) if len(deltas) else np.zeros((0, w))
        cross = np.einsum("ni,nj->nij", prefix, deltas).reshape(len(deltas), w * w)
        cross = cross + np.einsum("ni,nj->nij", deltas, deltas).reshape(len(deltas), w * w) / 2
        inc_rows.append(np.vstack([np.zeros((1, w)), deltas]))
        cross_rows.append(np.vstack([np.zeros((1, w * w)), cross]))
    return IscCache(inc=tuple(inc_rows), cross=tuple(cross_rows))


def window_signature(states, depth: int) -> np.ndarray:
    """Flattened levels 1..depth of the signature of a window's state path."""
    sig = signature_batch(states, depth)
    return algebra.flatten(sig, list(range(1, depth + 1)))


# --------------------------------------------------------------- windows


@dataclass
class WindowSample:
    """One tokenizable slice of a trajectory.

    states holds the observed window states and, for training windows, the
    post-window state as a final extra row (unused by tokens). inc/cross
    rows are aligned with the observed states.
    """

    start: int
    states: np.ndarray
    prev_action: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    inc: tuple[np.ndarray, ...] | None = None
    cross: tuple[np.ndarray, ...] | None = None
    window_sig: np.ndarray | None = None

    @property
    def steps(self) -> int:
        return len(self.actions)


def valid_window_starts(traj, context_len: int) -> range:
    return range(0, len(traj.actions) - context_len + 1)


def build_window(traj, start: int, cfg: TokenizerConfig, cache: IscCache | None = None) -> WindowSample:
    """Slice one training window out of a trajectory.

    The ISC rows are warm-started from the trajectory beginning: they are
    exactly the rows a single stream over the whole trajectory produces.
    """
    T = cfg.context_len
    n_steps = len(traj.actions)
    if start < 0 or start + T > n_steps:
        raise IndexError(
            f"window [{start}, {start + T}) out of range for trajectory with {n_steps} steps"
        )
    states = np.asarray(traj.states, dtype=np.float64)
    actions = np.asarray(traj.actions, dtype=np.float64)
    rewards = np.asarray(traj.rewards, dtype=np.float64)

    prev_action = actions[start - 1] if start > 0 else np.zeros(actions.shape[1])
    window = WindowSample(
        start=start,
        states=states[start : start + T + 1],
        prev_action=prev_action,
        actions=actions[start : start + T],
        rewards=rewards[start : start + T],
    )
    if cfg.mode in ("isc", "correlation"):
        if cache is None:
            cache = isc_cache(states, cfg.channels)
        window.inc = tuple(rows[start : start + T] for rows in cache.inc)
        window.cross = tuple(rows[start : start + T] for rows in cache.cross)
    else:
        window.window_sig = window_signature(states[start : start + T], cfg.depth)
    return window


# --------------------------------------------------------------- correlation features


def running_increment_stats(inc_rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Running mean and running (biased) covariance over window rows 0..t.

    Returns (mean (T, w), cov flattened (T, w*w)); the step-0 covariance is
    the zero matrix (a single sample has no spread).
    """
    T, w = inc_rows.shape
    counts = np.arange(1, T + 1, dtype=np.float64)[:, None]
    mean = np.cumsum(inc_rows, axis=0) / counts
    outer = np.einsum("ti,tj->tij", inc_rows, inc_rows).reshape(T, w * w)
    e_outer = np.cumsum(outer, axis=0) / counts
    cov = e_outer - np.einsum("ti,tj->tij", mean, mean).reshape(T, w * w)
    return mean, cov


def _correlation_slot_features(
    window_inc: Sequence[np.ndarray], channel_mode: str
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-slot raw correlation features, aligned with the layout slots."""
    means, covs = [], []
    for rows in window_inc:
        m, c = running_increment_stats(rows)
        means.append(m)
        covs.append(c)
    if channel_mode == "concat":
        return [np.concatenate(means, axis=1)], [np.concatenate(covs, axis=1)]
    return means, covs


def _apply_scaler(
    per_slot: list[np.ndarray], means: tuple[np.ndarray, ...], scales: tuple[np.ndarray, ...]
) -> list[np.ndarray]:
    return [(f - m) * s for f, m, s in zip(per_slot, means, scales)]


def correlation_features(window: WindowSample, cfg: TokenizerConfig) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Scaled correlation payload rows (per INC slot, per CROSS slot)."""
    means, covs = _correlation_slot_features(window.inc, cfg.channel_token_mode)
    if cfg.corr_scaler is not None:
        means = _apply_scaler(means, cfg.corr_scaler.inc_mean, cfg.corr_scaler.inc_scale)
        covs = _apply_scaler(covs, cfg.corr_scaler.cross_mean, cfg.corr_scaler.cross_scale)
    return means, covs


def fit_correlation_scaler(trajectories, cfg: TokenizerConfig) -> CorrelationScaler:
    """Fit the correlation normalizer on a training set.

    Correlation features are z-normalized per feature and rescaled so each
    feature's spread matches the corresponding ISC feature's spread over
    the same window population.
    """
    isc_arrays = encode_windows(trajectories, replace(cfg, mode="isc", corr_scaler=None))
    raw_arrays = encode_windows(trajectories, replace(cfg, mode="correlation", corr_scaler=None))

    inc_mean, inc_scale, cross_mean, cross_scale = [], [], [], []
    for raw, isc in zip(raw_arrays.inc, isc_arrays.inc):
        m, s = _scaler_entries(raw, isc)
        inc_mean.append(m)
        inc_scale.append(s)
    for raw, isc in zip(raw_arrays.cross, isc_arrays.cross):
        m, s = _scaler_entries(raw, isc)
        cross_mean.append(m)
        cross_scale.append(s)
    return CorrelationScaler(
        inc_mean=tuple(inc_mean),
        inc_scale=tuple(inc_scale),
        cross_mean=tuple(cross_mean),
        cross_scale=tuple(cross_scale),
    )


def _scaler_entries(raw: np.ndarray, isc: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    raw2 = raw.reshape(-1, raw.shape[-1]).astype(np.float64)
    isc2 = isc.reshape(-1, isc.shape[-1]).astype(np.float64)
    mean = raw2.mean(axis=0)
    raw_std = raw2.std(axis=0)
    target_std = isc2.std(axis=0)
    scale = np.where(raw_std > 0, target_std / np.where(raw_std > 0, raw_std, 1.0), 0.0)
    return mean, scale


# --------------------------------------------------------------- tokenize


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    payload: np.ndarray
    type_id: int
    channel_id: int
    position_id: int


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[Token, ...]
    layout: TokenLayout

    def __len__(self) -> int:
        return len(self.tokens)

    def payloads(self) -> list[np.ndarray]:
        return [t.payload for t in self.tokens]


def tokenize(window: WindowSample, cfg: TokenizerConfig, goal_override: float | None = None) -> TokenSequence:
    """Turn one window into the ordered token sequence.

    Pure in (window, cfg); goal_override substitutes the GOAL payload for
    closed-loop evaluation, where the target is user-chosen rather than a
    window reward sum.
    """
    steps = window.steps
    state_dim = window.states.shape[1]
    action_dim = window.actions.shape[1] if window.actions.ndim == 2 else len(window.prev_action)
    layout = token_dims(cfg, state_dim, action_dim)

    goal = goal_token(window.rewards, cfg.goal_scale) if goal_override is None else float(goal_override)

    header_payloads: list[np.ndarray] = [np.array([goal]), np.asarray(window.prev_action, dtype=np.float64)]
    if cfg.mode == "full_signature":
        if window.window_sig is None:
            raise ShapeMismatchError("window was not built in full_signature mode")
        header_payloads.append(np.asarray(window.window_sig, dtype=np.float64))
        step_payloads = [[np.asarray(window.states[t], dtype=np.float64), np.asarray(window.actions[t], dtype=np.float64)] for t in range(steps)]
    else:
        if window.inc is None or window.cross is None:
            raise ShapeMismatchError("window carries no ISC rows; rebuild it under this config")
        if cfg.mode == "isc":
            inc_slots, cross_slots = _isc_slot_features(window.inc, window.cross, cfg.channel_token_mode)
        else:
            inc_slots, cross_slots = correlation_features(window, cfg)
        step_payloads = []
        for t in range(steps):
            payloads = [np.asarray(window.states[t], dtype=np.float64)]
            payloads.extend(rows[t] for rows in inc_slots)
            payloads.extend(rows[t] for rows in cross_slots)
            payloads.append(np.asarray(window.actions[t], dtype=np.float64))
            step_payloads.append(payloads)

    tokens: list[Token] = []
    for slot, payload in zip(layout.header, header_payloads):
        _check_width(slot, payload)
        tokens.append(Token(slot.kind, payload, int(slot.kind), slot.channel_id, 0))
    for t in range(steps):
        for slot, payload in zip(layout.per_step, step_payloads[t]):
            _check_width(slot, payload)
            tokens.append(Token(slot.kind, payload, int(slot.kind), slot.channel_id, t))
    return TokenSequence(tokens=tuple(tokens), layout=layout)


def _isc_slot_features(
    window_inc: Sequence[np.ndarray], window_cross: Sequence[np.ndarray], channel_mode: str
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    if channel_mode == "concat":
        return (
            [np.concatenate(window_inc, axis=1)],
            [np.concatenate(window_cross, axis=1)],
        )
    return list(window_inc), list(window_cross)


def _check_width(slot: SlotSpec, payload: np.ndarray) -> None:
    if payload.shape != (slot.width,):
        raise ShapeMismatchError(
            f"{slot.kind.name} payload has shape {payload.shape}, expected ({slot.width},)"
        )


# --------------------------------------------------------------- batched encoding


@dataclass
class WindowArrays:
    """Every valid window of a dataset, stacked per token kind (float32).

    act_in duplicates targets: executed actions are both the ACT input
    tokens and the regression targets.
    """

    layout: TokenLayout
    goal: np.ndarray                 # (Nw, 1)
    prev_action: np.ndarray          # (Nw, da)
    obs: np.ndarray                  # (Nw, T, ds)
    inc: tuple[np.ndarray, ...]      # per INC slot, (Nw, T, w)
    cross: tuple[np.ndarray, ...]    # per CROSS slot, (Nw, T, w)
    sig: np.ndarray | None           # (Nw, w_sig) in full_signature mode
    targets: np.ndarray              # (Nw, T, da)
    source: np.ndarray               # (Nw, 2) = (trajectory index, start)

    @property
    def num_windows(self) -> int:
        return self.targets.shape[0]

    @property
    def act_in(self) -> np.ndarray:
        return self.targets


def encode_windows(trajectories, cfg: TokenizerConfig) -> WindowArrays:
    """Vectorized tokenization of every valid window of every trajectory.

    Produces exactly the payloads :func:`tokenize` would, stacked for
    batched training.
    """
    T = cfg.context_len
    first = trajectories[0]
    state_dim = np.asarray(first.states).shape[1]
    action_dim = np.asarray(first.actions).shape[1]
    layout = token_dims(cfg, state_dim, action_dim)

    goals, prevs, obs, acts, sigs, source = [], [], [], [], [], []
    n_inc_slots = sum(1 for s in layout.per_step if s.kind == TokenKind.INC)
    inc_slots: list[list[np.ndarray]] = [[] for _ in range(n_inc_slots)]
    cross_slots: list[list[np.ndarray]] = [[] for _ in range(n_inc_slots)]

    for ti, traj in enumerate(trajectories):
        states = np.asarray(traj.states, dtype=np.float64)
        actions = np.asarray(traj.actions, dtype=np.float64)
        rewards = np.asarray(traj.rewards, dtype=np.float64)
        n_steps = len(actions)
        if n_steps < T:
            continue
        n_win = n_steps - T + 1

        obs.append(sliding_window_view(states[:n_steps], (T, state_dim)).reshape(n_win, T, state_dim))
        acts.append(sliding_window_view(actions, (T, action_dim)).reshape(n_win, T, action_dim))
        goals.append(sliding_window_view(rewards, T).sum(axis=1)[:, None] / cfg.goal_scale)
        padded = np.vstack([np.zeros((1, action_dim)), actions])
        prevs.append(padded[:n_win])
        source.append(np.stack([np.full(n_win, ti), np.arange(n_win)], axis=1))

        if cfg.mode in ("isc", "correlation"):
            cache = isc_cache(states, cfg.channels)
            win_inc = [
                sliding_window_view(rows[:n_steps], (T, rows.shape[1])).reshape(n_win, T, rows.shape[1])
                for rows in cache.inc
            ]
            win_cross = [
                sliding_window_view(rows[:n_steps], (T, rows.shape[1])).reshape(n_win, T, rows.shape[1])
                for rows in cache.cross
            ]
            if cfg.mode == "isc":
                slot_inc, slot_cross = _stack_isc_slots(win_inc, win_cross, cfg.channel_token_mode)
            else:
                slot_inc, slot_cross = _stack_correlation_slots(win_inc, cfg)
            for i, block in enumerate(slot_inc):
                inc_slots[i].append(block)
            for i, block in enumerate(slot_cross):
                cross_slots[i].append(block)
        else:
            sigs.append(_window_signatures(states, T, cfg.depth, n_win))

    if not obs:
        raise ValueError(f"no trajectory offers a window of {T} steps")

    return WindowArrays(
        layout=layout,
        goal=np.concatenate(goals).astype(np.float32),
        prev_action=np.concatenate(prevs).astype(np.float32),
        obs=np.concatenate(obs).astype(np.float32),
        inc=tuple(np.concatenate(blocks).astype(np.float32) for blocks in inc_slots),
        cross=tuple(np.concatenate(blocks).astype(np.float32) for blocks in cross_slots),
        sig=np.concatenate(sigs).astype(np.float32) if sigs else None,
        targets=np.concatenate(acts).astype(np.float32),
        source=np.concatenate(source).astype(np.int64),
    )


def _stack_isc_slots(win_inc, win_cross, channel_mode):
    if channel_mode == "concat":
        return [np.concatenate(win_inc, axis=2)], [np.concatenate(win_cross, axis=2)]
    return list(win_inc), list(win_cross)


def _stack_correlation_slots(win_inc, cfg: TokenizerConfig):
    n_win, T = win_inc[0].shape[:2]
    means, covs = [], []
    for block in win_inc:  # (Nw, T, w)
        w = block.shape[2]
        counts = np.arange(1, T + 1, dtype=np.float64)[None, :, None]
        mean = np.cumsum(block, axis=1) / counts
        outer = np.einsum("nti,ntj->ntij", block, block).reshape(n_win, T, w * w)
        cov = np.cumsum(outer, axis=1) / counts
        cov = cov - np.einsum("nti,ntj->ntij", mean, mean).reshape(n_win, T, w * w)
        means.append(mean)
        covs.append(cov)
    if cfg.channel_token_mode == "concat":
        means, covs = [np.concatenate(means, axis=2)], [np.concatenate(covs, axis=2)]
    if cfg.corr_scaler is not None:
        means = [
            (f - m) * s
            for f, m, s in zip(means, cfg.corr_scaler.inc_mean, cfg.corr_scaler.inc_scale)
        ]
        covs = [
            (f - m) * s
            for f, m, s in zip(covs, cfg.corr_scaler.cross_mean, cfg.corr_scaler.cross_scale)
        ]
    return means, covs


def _window_signatures(states: np.ndarray, T: int, depth: int, n_win: int) -> np.ndarray:
    """Signature of each window's observed state path, flattened levels 1..depth."""
    if depth == 2:
        d = states.shape[1]
        deltas = np.diff(states, axis=0)
        win = sliding_window_view(deltas[: n_win + T - 2], (T - 1, d)).reshape(n_win, T - 1, d) if T > 1 else np.zeros((n_win, 0, d))
        level1 = win.sum(axis=1)
        prefix = np.cumsum(win, axis=1) - win  # exclusive prefix sums per window
        level2 = np.einsum("nti,ntj->nij", prefix, win).reshape(n_win, d * d)
        level2 = level2 + 0.5 * np.einsum("nti,ntj->nij", win, win).reshape(n_win, d * d)
        return np.concatenate([level1, level2], axis=1)
    return np.stack(
        [window_signature(states[s : s + T], depth) for s in range(n_win)]
    )
