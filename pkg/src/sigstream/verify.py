"""Randomized invariant suites behind the `verify` command.

Each suite draws random paths and checks one family of invariants,
returning counterexamples instead of raising, so the CLI can dump them.
The chen/stream suites accept a deliberately-corrupted streaming update
(dropping the 1/j! factors) as a mutation self-test: a healthy build must
fail under it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import algebra
from .algebra import TruncatedTensor
from .signature import (
    ChannelSpec,
    SignatureState,
    isc_sequence,
    reconstruct,
    signature_batch,
    strict_iterated_sum,
    universal_fit,
)

SUITES = ("chen", "decay", "stream", "reparam", "fit")


@dataclass
class SuiteResult:
    suite: str
    trials: int
    failures: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} suite={self.suite} trials={self.trials} failures={len(self.failures)}"


def _random_path(rng, max_points=20, max_dim=4):
    n = int(rng.integers(2, max_points + 1))
    d = int(rng.integers(1, max_dim + 1))
    return rng.uniform(-1, 1, size=(n, d))


def _corrupt_stream_signature(path: np.ndarray, depth: int) -> TruncatedTensor:
    """Streaming recursion with the 1/j! factor dropped (mutation hook)."""
    d = path.shape[1]
    cur = [np.ones(1)] + [np.zeros(d**k) for k in range(1, depth + 1)]
    for delta in np.diff(path, axis=0):
        pw = [np.ones(1)]
        for _ in range(depth):
            pw.append(np.kron(pw[-1], delta))  # missing /j!
        new = [cur[0]]
        for k in range(1, depth + 1):
            dS = np.zeros(d**k)
            for j in range(1, k + 1):
                dS += np.kron(cur[k - j], pw[j])
            new.append(cur[k] + dS)
        cur = new
    return TruncatedTensor(d, depth, tuple(cur))


def _stream_signature(path: np.ndarray, depth: int) -> TruncatedTensor:
    state = SignatureState(path.shape[1], depth)
    for delta in np.diff(path, axis=0):
        state.update(delta)
    return state.current


def run_chen_suite(trials: int, seed: int, corrupt: bool = False) -> SuiteResult:
    """I1 reconstruction identity plus the I3 strict-sum bridge."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("chen", trials)
    for trial in range(trials):
        path = _random_path(rng)
        depth = int(rng.integers(1, 5))
        d = path.shape[1]
        ref = (
            _corrupt_stream_signature(path, depth) if corrupt else signature_batch(path, depth)
        )
        records = isc_sequence(path, depth, ChannelSpec.full(d))
        got = reconstruct(records, 0, d, depth)
        for k in range(depth + 1):
            scale = max(1.0, float(np.abs(ref.levels[k]).max()))
            err = float(np.abs(got.levels[k] - ref.levels[k]).max()) / scale
            if err >= 1e-10:
                result.failures.append(
                    {"trial": trial, "check": "I1", "level": k, "rel_error": err,
                     "dim": d, "depth": depth, "points": path.shape[0]}
                )
                break
        if depth >= 2:
            deltas = np.diff(path, axis=0)
            diag = 0.5 * sum(np.kron(dx, dx) for dx in deltas)
            bridge = strict_iterated_sum(path, 2).level(2) + diag
            err = float(np.abs(ref.levels[2] - bridge).max())
            if err >= 1e-12:
                result.failures.append(
                    {"trial": trial, "check": "I3", "abs_error": err, "dim": d,
                     "points": path.shape[0]}
                )
    return result


def run_stream_suite(trials: int, seed: int, corrupt: bool = False) -> SuiteResult:
    """I2 streaming == batch, and I6 first-level contributions."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("stream", trials)
    for trial in range(trials):
        path = _random_path(rng)
        depth = int(rng.integers(1, 5))
        d = path.shape[1]
        got = (
            _corrupt_stream_signature(path, depth) if corrupt else _stream_signature(path, depth)
        )
        ref = signature_batch(path, depth)
        for k in range(depth + 1):
            err = float(np.abs(got.levels[k] - ref.levels[k]).max())
            if err >= 1e-12:
                result.failures.append(
                    {"trial": trial, "check": "I2", "level": k, "abs_error": err,
                     "dim": d, "depth": depth}
                )
                break
        records = isc_sequence(path, depth, ChannelSpec.full(d))
        deltas = np.diff(path, axis=0)
        for n, rec in enumerate(records):
            if not np.array_equal(rec.contribution().level(1), deltas[n]):
                result.failures.append({"trial": trial, "check": "I6", "step": n})
                break
    return result


def run_decay_suite(trials: int, seed: int) -> SuiteResult:
    """I4 factorial decay under the per-level ℓ1 norm."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("decay", trials)
    for trial in range(trials):
        path = _random_path(rng)
        depth = 4
        sig = signature_batch(path, depth)
        total_var = float(np.abs(np.diff(path, axis=0)).sum())
        fact = 1.0
        for k in range(1, depth + 1):
            fact *= k
            bound = total_var**k / fact
            norm = algebra.level_norm(sig, k)
            if norm > bound + 1e-12:
                result.failures.append(
                    {"trial": trial, "check": "I4", "level": k, "norm": norm, "bound": bound}
                )
    return result


def run_reparam_suite(trials: int, seed: int) -> SuiteResult:
    """I5 invariance to duplicate-point insertion; zero records for them."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("reparam", trials)
    for trial in range(trials):
        path = _random_path(rng)
        depth = int(rng.integers(1, 5))
        d = path.shape[1]
        n_dup = int(rng.integers(1, 4))
        where = rng.integers(0, path.shape[0], size=n_dup)
        dup = np.insert(path, where, path[where], axis=0)
        a = signature_batch(path, depth)
        b = signature_batch(dup, depth)
        for k in range(depth + 1):
            err = float(np.abs(a.levels[k] - b.levels[k]).max())
            if err > 1e-12:
                result.failures.append({"trial": trial, "check": "I5", "level": k, "abs_error": err})
                break
        records = isc_sequence(dup, depth, ChannelSpec.full(d))
        for n in np.flatnonzero(~np.diff(dup, axis=0).any(axis=1)):
            rec = records[int(n)].contribution()
            if any(rec.levels[k].any() for k in range(1, depth + 1)):
                result.failures.append({"trial": trial, "check": "I5-records", "step": int(n)})
                break
    return result


def run_fit_suite(trials: int, seed: int) -> SuiteResult:
    """I7 monotone per-depth RMSE, plus the signed-area linearity check."""
    rng = np.random.default_rng(seed)
    result = SuiteResult("fit", trials)
    n_batches = max(1, trials // 50)
    for trial in range(n_batches):
        paths = [rng.uniform(-1, 1, size=(int(rng.integers(4, 10)), 2)) for _ in range(60)]
        targets = [float(np.linalg.norm(p[-1] - p[0])) for p in paths]
        report = universal_fit(paths, targets, depth=3)
        curve = [report.rmse_by_depth[k] for k in range(1, 4)]
        if any(curve[i + 1] > curve[i] + 1e-9 for i in range(2)):
            result.failures.append({"trial": trial, "check": "I7", "curve": curve})
        loops = [np.vstack([p, p[:1]]) for p in paths]
        areas = [
            0.5 * float(np.sum(p[:-1, 0] * p[1:, 1] - p[1:, 0] * p[:-1, 1])) for p in loops
        ]
        area_report = universal_fit(loops, areas, depth=2)
        if area_report.rmse_by_depth[2] > 1e-6:
            result.failures.append(
                {"trial": trial, "check": "area", "rmse": area_report.rmse_by_depth[2]}
            )
    result.trials = n_batches
    return result


def run_suite(name: str, trials: int, seed: int, corrupt: bool = False) -> SuiteResult:
    if name == "chen":
        return run_chen_suite(trials, seed, corrupt)
    if name == "stream":
        return run_stream_suite(trials, seed, corrupt)
    if name == "decay":
        return run_decay_suite(trials, seed)
    if name == "reparam":
        return run_reparam_suite(trials, seed)
    if name == "fit":
        return run_fit_suite(trials, seed)
    raise ValueError(f"unknown suite {name!r}; choose from {SUITES}")
