"""Truncated path signatures under the piecewise-linear (Chen) convention.

A sampled path x_0..x_N is treated as the concatenation of N linear
segments; its signature is the ordered product of segment exponentials
exp(Δx_n). The streaming update decomposes each step's effect into the
per-level incremental contributions

    ΔS^(k)_n = Σ_{j=1..k} (1/j!) S^(k-j)_{n-1} ⊗ Δx_n^{⊗j},

which sum back to the full signature levelwise (Chen's identity), so the
contribution sequence carries the complete signature information while
staying O(Σ_k d^k) per step regardless of path length.

The strict iterated sum Σ_{n1<...<nk} Δx_{n1} ⊗ ... ⊗ Δx_{nk} is kept as
an independent brute-force oracle; it differs from the Chen signature by
diagonal terms (at level 2: exactly ½ Σ_n Δx_n ⊗ Δx_n).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import algebra
from .algebra import TruncatedTensor
from .errors import (
    ResourceLimitError,
    ShapeMismatchError,
    SingularSystemError,
    ValidationError,
)

# Enumeration budget for the brute-force oracle.
STRICT_SUM_MAX_STEPS = 64
STRICT_SUM_MAX_DEPTH = 4


def as_path(points) -> np.ndarray:
    """Validate and coerce a path to an (N+1, d) float64 array."""
    try:
        arr = np.asarray(points, dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise ShapeMismatchError(f"path points are ragged or non-numeric: {exc}") from None
    if arr.ndim == 1 and arr.size == 0:
        raise ShapeMismatchError("a path needs at least one point")
    if arr.ndim != 2:
        raise ShapeMismatchError(f"path must be a sequence of equal-length points, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"path must contain at least one point in R^d, got shape {arr.shape}")
    return arr


def increments(points) -> np.ndarray:
    """Forward differences Δx_n = x_{n+1} - x_n, shape (N, d)."""
    return np.diff(as_path(points), axis=0)


def signature_batch(points, depth: int) -> TruncatedTensor:
    """Signature of a whole sampled path: ordered product of exp(Δx_n)."""
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")
    path = as_path(points)
    sig = algebra.unit(path.shape[1], depth)
    for delta in np.diff(path, axis=0):
        sig = algebra.product(sig, algebra.tensor_exp(delta, depth))
    return sig


@dataclass(frozen=True)
class ChannelSpec:
    """Disjoint groups of coordinate indices over which ISC is computed
    independently (to curb the d^k payload blow-up)."""

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen: set[int] = set()
        for g, idx in enumerate(self.groups):
            if len(idx) == 0:
                raise ValidationError(f"channel group {g} is empty")
            for i in idx:
                if i < 0:
                    raise ValidationError(f"negative channel index {i} in group {g}")
                if i in seen:
                    raise ValidationError(f"channel index {i} appears in two groups")
                seen.add(i)

    @classmethod
    def full(cls, dim: int) -> "ChannelSpec":
        """Single group covering all of 0..dim-1."""
        return cls((tuple(range(dim)),))

    @classmethod
    def of(cls, *groups: Sequence[int]) -> "ChannelSpec":
        return cls(tuple(tuple(int(i) for i in g) for g in groups))

    @property
    def num_groups(self) -> int:
        return len(self.groups)

    def group_dims(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    def validate_dim(self, dim: int) -> None:
        for g, idx in enumerate(self.groups):
            for i in idx:
                if i >= dim:
                    raise ValueError(f"group {g} indexes channel {i}, path has dim {dim}")


@dataclass(frozen=True)
class IscRecord:
    """Per-step incremental contributions, one tensor per channel group.

    Each contribution's level k holds ΔS^(k)_n for that group; level 0 is
    exactly 0 (one step never changes the unit), so summing records and
    re-inserting the unit reconstructs the signature.
    """

    step_index: int
    contributions: tuple[TruncatedTensor, ...]

    def contribution(self, group: int = 0) -> TruncatedTensor:
        return self.contributions[group]


class SignatureState:
    """Running signature of a streamed path. Single-owner mutable: do not
    share one state across threads; transferring ownership is fine."""

    def __init__(self, dim: int, depth: int):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        if depth < 0:
            raise ValueError(f"depth must be non-negative, got {depth}")
        self.current: TruncatedTensor = algebra.unit(dim, depth)
        self.steps_consumed: int = 0

    @property
    def dim(self) -> int:
        return self.current.dim

    @property
    def depth(self) -> int:
        return self.current.depth

    def update(self, delta) -> IscRecord:
        """Consume one increment; return its contribution record.

        The new state equals current ⊗ exp(delta); the record holds the
        per-level differences ΔS^(k). Cost is O(Σ_k d^k) per call,
        independent of how many steps were consumed before.
        """
        delta = np.asarray(delta, dtype=np.float64).ravel()
        if delta.size != self.dim:
            raise ShapeMismatchError(f"increment has dim {delta.size}, state has dim {self.dim}")
        cur = self.current.levels
        # pw[j] = delta^{⊗j} / j!
        pw = [np.ones(1)]
        for j in range(1, self.depth + 1):
            pw.append(np.kron(pw[-1], delta) / j)
        contrib = [np.zeros(1)]
        new_levels = [cur[0]]
        for k in range(1, self.depth + 1):
            dS = np.zeros(self.dim**k)
            for j in range(1, k + 1):
                dS += np.kron(cur[k - j], pw[j])
            contrib.append(dS)
            new_levels.append(cur[k] + dS)
        self.current = TruncatedTensor(self.dim, self.depth, tuple(new_levels))
        record = IscRecord(
            step_index=self.steps_consumed,
            contributions=(TruncatedTensor(self.dim, self.depth, tuple(contrib)),),
        )
        self.steps_consumed += 1
        return record


def isc_sequence(points, depth: int, channels: ChannelSpec) -> list[IscRecord]:
    """Per-step contribution records, streamed independently per group.

    Record n holds, for each group g, exactly the contribution that
    stream-updating the projection of the path onto g's coordinates
    produces at step n.
    """
    path = as_path(points)
    channels.validate_dim(path.shape[1])
    n_steps = path.shape[0] - 1
    states = [SignatureState(len(g), depth) for g in channels.groups]
    records: list[IscRecord] = []
    for n in range(n_steps):
        contribs = []
        for state, idx in zip(states, channels.groups):
            delta = path[n + 1, list(idx)] - path[n, list(idx)]
            contribs.append(state.update(delta).contribution())
        records.append(IscRecord(step_index=n, contributions=tuple(contribs)))
    return records


def reconstruct(records: Sequence[IscRecord], group: int, dim: int, depth: int) -> TruncatedTensor:
    """Sum one group's contributions and re-insert the unit.

    Exactly recovers the signature of the projected path (Chen's
    identity); records must be in strictly increasing step order.
    """
    total = [np.zeros(dim**k) for k in range(depth + 1)]
    total[0][0] = 1.0
    last = None
    for rec in records:
        if last is not None and rec.step_index <= last:
            raise ValidationError(
                f"records out of order: step {rec.step_index} after step {last}"
            )
        last = rec.step_index
        contrib = rec.contributions[group]
        if contrib.dim != dim or contrib.depth != depth:
            raise ShapeMismatchError(
                f"record {rec.step_index} group {group} has (dim={contrib.dim}, "
                f"depth={contrib.depth}), expected ({dim}, {depth})"
            )
        for k in range(1, depth + 1):
            total[k] += contrib.levels[k]
    return TruncatedTensor(dim, depth, tuple(total))


def strict_iterated_sum(points, depth: int) -> TruncatedTensor:
    """Brute-force oracle: Σ_{n1<...<nk} Δx_{n1} ⊗ ... ⊗ Δx_{nk}.

    Direct enumeration over strictly increasing index tuples (no Chen
    shortcut). Guarded to N <= 64 steps and depth <= 4 so the enumeration
    stays tractable.
    """
    path = as_path(points)
    deltas = np.diff(path, axis=0)
    n_steps, dim = deltas.shape
    if n_steps > STRICT_SUM_MAX_STEPS or depth > STRICT_SUM_MAX_DEPTH:
        raise ResourceLimitError(
            f"strict sum guard: N={n_steps} (max {STRICT_SUM_MAX_STEPS}), "
            f"depth={depth} (max {STRICT_SUM_MAX_DEPTH})"
        )
    levels = [np.zeros(dim**k) for k in range(depth + 1)]
    levels[0][0] = 1.0

    def walk(start: int, prefix: np.ndarray, k: int) -> None:
        # prefix is the tensor product over the indices chosen so far.
        for n in range(start, n_steps):
            term = np.kron(prefix, deltas[n])
            levels[k + 1] += term
            if k + 1 < depth:
                walk(n + 1, term, k + 1)

    if depth >= 1:
        walk(0, np.ones(1), 0)
    return TruncatedTensor(dim, depth, tuple(levels))


@dataclass
class FitReport:
    """Least-squares fit of a path functional from signature coordinates."""

    depth: int
    coefficients: np.ndarray
    rmse: float
    rmse_by_depth: dict[int, float] = field(default_factory=dict)


def universal_fit(paths: Sequence, targets: Sequence[float], depth: int, ridge: float = 1e-8) -> FitReport:
    """Fit targets linearly from flattened truncated signatures.

    The design matrix at depth k stacks flatten(signature, levels 0..k)
    per path (level 0 is the intercept column). Solved via the normal
    equations with ridge damping; ridge=0 raises on a degenerate system.
    The report carries the in-sample RMSE at every depth 1..depth.
    """
    if len(paths) < 2:
        raise ValueError(f"need at least 2 paths, got {len(paths)}")
    y = np.asarray(targets, dtype=np.float64).ravel()
    if y.size != len(paths):
        raise ShapeMismatchError(f"{len(paths)} paths but {y.size} targets")
    if depth < 1:
        raise ValueError(f"depth must be >= 1, got {depth}")

    features = np.stack([algebra.flatten(signature_batch(p, depth)) for p in paths])
    dim = as_path(paths[0]).shape[1]
    sizes = algebra.level_sizes(dim, depth)

    rmse_by_depth: dict[int, float] = {}
    coeffs = None
    for k in range(1, depth + 1):
        ncols = sum(sizes[: k + 1])
        X = features[:, :ncols]
        gram = X.T @ X
        if ridge > 0.0:
            gram = gram + ridge * np.eye(ncols)
        try:
            beta = np.linalg.solve(gram, X.T @ y)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(
                f"design matrix degenerate at depth {k} with ridge={ridge}: {exc}"
            ) from None
        resid = X @ beta - y
        rmse_by_depth[k] = float(np.sqrt(np.mean(resid**2)))
        coeffs = beta
    return FitReport(
        depth=depth,
        coefficients=coeffs,
        rmse=rmse_by_depth[depth],
        rmse_by_depth=rmse_by_depth,
    )
