"""Dense truncated tensor algebra over R^d.

An element is a graded stack of coefficient arrays: level k is a flat
float64 array of d**k entries in row-major word order, so the coefficient
of the word (i1, ..., ik), with channels in 0..d-1, sits at position
i1*d**(k-1) + i2*d**(k-2) + ... + ik. Level 0 is a single scalar.

The serialization order used by :func:`flatten` is part of the public
contract: requested levels ascend, and words within a level are
lexicographic (exactly the row-major layout above). This makes flattened
vectors stable across runs and platforms for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ShapeMismatchError


@dataclass(frozen=True)
class TruncatedTensor:
    """Element of the depth-K truncated tensor algebra over R^dim.

    Values are treated as immutable: operations return new instances and
    never write into an existing level array.
    """

    dim: int
    depth: int
    levels: tuple[np.ndarray, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be positive, got {self.dim}")
        if self.depth < 0:
            raise ValueError(f"depth must be non-negative, got {self.depth}")
        if len(self.levels) != self.depth + 1:
            raise ShapeMismatchError(
                f"expected {self.depth + 1} levels, got {len(self.levels)}"
            )
        for k, lvl in enumerate(self.levels):
            if lvl.shape != (self.dim**k,):
                raise ShapeMismatchError(
                    f"level {k} must hold {self.dim**k} coefficients, "
                    f"got shape {lvl.shape}"
                )

    def level(self, k: int) -> np.ndarray:
        """Coefficient array of grade k (flat, row-major word order)."""
        if not 0 <= k <= self.depth:
            raise ValueError(f"level {k} outside 0..{self.depth}")
        return self.levels[k]

    @property
    def scalar(self) -> float:
        """The level-0 coefficient (1.0 for group-like elements)."""
        return float(self.levels[0][0])


def _as_levels(arrays: Iterable[np.ndarray]) -> tuple[np.ndarray, ...]:
    return tuple(np.asarray(a, dtype=np.float64) for a in arrays)


def make_tensor(dim: int, depth: int, levels: Iterable[np.ndarray]) -> TruncatedTensor:
    """Build a TruncatedTensor, coercing level arrays to float64."""
    return TruncatedTensor(dim, depth, _as_levels(levels))


def unit(dim: int, depth: int) -> TruncatedTensor:
    """Multiplicative unit: level 0 is 1, all higher levels zero."""
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    levels = [np.ones(1)] + [np.zeros(dim**k) for k in range(1, depth + 1)]
    return TruncatedTensor(dim, depth, tuple(levels))


def zero(dim: int, depth: int) -> TruncatedTensor:
    """Additive zero of the algebra."""
    return TruncatedTensor(dim, depth, tuple(np.zeros(dim**k) for k in range(depth + 1)))


def _check_compatible(a: TruncatedTensor, b: TruncatedTensor) -> None:
    if a.dim != b.dim or a.depth != b.depth:
        raise ShapeMismatchError(
            f"operands disagree: (dim={a.dim}, depth={a.depth}) vs "
            f"(dim={b.dim}, depth={b.depth})"
        )


def add(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Coefficientwise sum at every level."""
    _check_compatible(a, b)
    return TruncatedTensor(a.dim, a.depth, tuple(x + y for x, y in zip(a.levels, b.levels)))


def scale(a: TruncatedTensor, c: float) -> TruncatedTensor:
    """Coefficientwise scalar multiple at every level."""
    c = float(c)
    return TruncatedTensor(a.dim, a.depth, tuple(c * x for x in a.levels))


def product(a: TruncatedTensor, b: TruncatedTensor) -> TruncatedTensor:
    """Graded truncated tensor product: (a ⊗ b)_k = Σ_{i+j=k} a_i ⊗ b_j.

    Grades above the shared depth are discarded. np.kron on the flat level
    arrays reproduces exactly the row-major word order of the contract.
    """
    _check_compatible(a, b)
    out = [np.zeros(a.dim**k) for k in range(a.depth + 1)]
    for i, ai in enumerate(a.levels):
        for j in range(a.depth - i + 1):
            out[i + j] += np.kron(ai, b.levels[j])
    return TruncatedTensor(a.dim, a.depth, tuple(out))


def tensor_power(v: Sequence[float] | np.ndarray, j: int, depth: int | None = None) -> np.ndarray:
    """j-fold tensor power of a vector, flat: entry (i1..ij) = v[i1]...v[ij].

    j = 0 returns the scalar 1. When a depth context is given, j above it
    is rejected.
    """
    if j < 0:
        raise ValueError(f"power must be non-negative, got {j}")
    if depth is not None and j > depth:
        raise ValueError(f"power {j} exceeds depth {depth}")
    v = np.asarray(v, dtype=np.float64).ravel()
    out = np.ones(1)
    for _ in range(j):
        out = np.kron(out, v)
    return out


def tensor_exp(v: Sequence[float] | np.ndarray, depth: int) -> TruncatedTensor:
    """Truncated exponential of a level-1 vector: level j = v^{⊗j} / j!.

    This is the signature of a single linear segment with increment v and
    the generator of the Chen streaming update; it is group-like.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    levels = [np.ones(1)]
    for j in range(1, depth + 1):
        levels.append(np.kron(levels[-1], v) / j)
    return TruncatedTensor(v.size, depth, tuple(levels))


def level_norm(a: TruncatedTensor, k: int) -> float:
    """ℓ1 norm of level k (the norm used in the factorial-decay bound)."""
    if not 0 <= k <= a.depth:
        raise ValueError(f"level {k} outside 0..{a.depth}")
    return float(np.abs(a.levels[k]).sum())


def level_sizes(dim: int, depth: int) -> tuple[int, ...]:
    """Number of coefficients per level, 0..depth."""
    return tuple(dim**k for k in range(depth + 1))


def level_offsets(dim: int, levels: Sequence[int]) -> list[tuple[int, int, int]]:
    """Offset table for :func:`flatten`: (level, start, size) per level.

    Levels are listed in increasing order, matching the flattened layout.
    """
    lv = _normalize_levels(levels)
    table = []
    start = 0
    for k in lv:
        size = dim**k
        table.append((k, start, size))
        start += size
    return table


def _normalize_levels(levels: Sequence[int]) -> list[int]:
    lv = sorted({int(k) for k in levels})
    if not lv:
        raise ValueError("at least one level must be requested")
    if lv[0] < 0:
        raise ValueError(f"negative level {lv[0]}")
    return lv


def flatten(a: TruncatedTensor, levels: Sequence[int] | None = None) -> np.ndarray:
    """Concatenate the requested levels (ascending; row-major within each).

    levels=None serializes every level 0..depth.
    """
    if levels is None:
        lv = list(range(a.depth + 1))
    else:
        lv = _normalize_levels(levels)
        if lv[-1] > a.depth:
            raise ValueError(f"level {lv[-1]} exceeds depth {a.depth}")
    return np.concatenate([a.levels[k] for k in lv])


def unflatten(
    vec: np.ndarray,
    dim: int,
    depth: int,
    levels: Sequence[int] | None = None,
) -> TruncatedTensor:
    """Inverse of :func:`flatten`; unrequested levels come back as zero."""
    if levels is None:
        lv = list(range(depth + 1))
    else:
        lv = _normalize_levels(levels)
        if lv[-1] > depth:
            raise ValueError(f"level {lv[-1]} exceeds depth {depth}")
    vec = np.asarray(vec, dtype=np.float64).ravel()
    expected = sum(dim**k for k in lv)
    if vec.size != expected:
        raise ShapeMismatchError(f"expected {expected} coefficients, got {vec.size}")
    out = [np.zeros(dim**k) for k in range(depth + 1)]
    start = 0
    for k in lv:
        size = dim**k
        out[k] = vec[start : start + size].copy()
        start += size
    return TruncatedTensor(dim, depth, tuple(out))
