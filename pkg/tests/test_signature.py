"""Tests for batch/streaming signatures, ISC records, oracle, and fits."""

import numpy as np
import pytest

from sigstream import algebra, signature
from sigstream.errors import (
    ResourceLimitError,
    ShapeMismatchError,
    SingularSystemError,
    ValidationError,
)
from sigstream.signature import (
    ChannelSpec,
    SignatureState,
    isc_sequence,
    reconstruct,
    signature_batch,
    strict_iterated_sum,
    universal_fit,
)

L_PATH = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]])


def random_path(rng, n_points, dim):
    return rng.uniform(-1, 1, size=(n_points, dim))


# ---------------------------------------------------------------- batch


def test_batch_1d_path_is_scalar_series():
    sig = signature_batch([[0.0], [1.0], [2.0]], 3)
    np.testing.assert_allclose(
        [lvl[0] for lvl in sig.levels], [1.0, 2.0, 2.0, 4.0 / 3.0], atol=1e-15
    )


def test_batch_l_path_level2():
    # Oracle: strict level 2 plus the diagonal ½ Σ Δx ⊗ Δx.
    deltas = np.diff(L_PATH, axis=0)
    expected = strict_iterated_sum(L_PATH, 2).level(2) + 0.5 * sum(
        np.kron(d, d) for d in deltas
    )
    np.testing.assert_allclose(expected, [0.5, 1.0, 0.0, 0.5], atol=1e-15)
    np.testing.assert_allclose(signature_batch(L_PATH, 2).level(2), expected, atol=1e-15)


def test_batch_single_point_is_unit():
    sig = signature_batch([[3.0, 4.0]], 2)
    u = algebra.unit(2, 2)
    for k in range(3):
        np.testing.assert_array_equal(sig.levels[k], u.levels[k])


def test_batch_rejects_ragged_points():
    with pytest.raises(ShapeMismatchError):
        signature_batch([[0.0, 0.0], [1.0]], 2)


def test_batch_group_like():
    rng = np.random.default_rng(3)
    sig = signature_batch(random_path(rng, 8, 3), 3)
    assert sig.scalar == 1.0


# ---------------------------------------------------------------- streaming


def test_stream_init_state():
    st = SignatureState(2, 2)
    u = algebra.unit(2, 2)
    for k in range(3):
        np.testing.assert_array_equal(st.current.levels[k], u.levels[k])
    assert st.steps_consumed == 0
    empty = reconstruct([], 0, 2, 2)
    for k in range(3):
        np.testing.assert_array_equal(empty.levels[k], u.levels[k])


def test_stream_one_update_matches_batch():
    rng = np.random.default_rng(4)
    delta = rng.uniform(-1, 1, size=3)
    st = SignatureState(3, 3)
    st.update(delta)
    ref = signature_batch(np.vstack([np.zeros(3), delta]), 3)
    for k in range(4):
        np.testing.assert_allclose(st.current.levels[k], ref.levels[k], atol=1e-15)


def test_first_step_contribution_closed_form():
    st = SignatureState(2, 2)
    rec = st.update([1.0, 2.0])
    np.testing.assert_allclose(rec.contribution().level(1), [1.0, 2.0], atol=1e-15)
    np.testing.assert_allclose(
        rec.contribution().level(2), [0.5, 1.0, 1.0, 2.0], atol=1e-15
    )
    assert rec.contribution().scalar == 0.0


def test_second_step_of_l_path():
    st = SignatureState(2, 2)
    st.update([1.0, 0.0])
    rec = st.update([0.0, 1.0])
    np.testing.assert_allclose(rec.contribution().level(2), [0.0, 1.0, 0.0, 0.5], atol=1e-15)
    # summed contributions must equal the batch level 2
    np.testing.assert_allclose(st.current.level(2), [0.5, 1.0, 0.0, 0.5], atol=1e-15)


def test_zero_increment_is_inert():
    st = SignatureState(2, 2)
    st.update([0.5, -0.5])
    before = [lvl.copy() for lvl in st.current.levels]
    rec = st.update([0.0, 0.0])
    for k in range(3):
        np.testing.assert_array_equal(st.current.levels[k], before[k])
        if k > 0:
            assert not rec.contribution().levels[k].any()


def test_stream_dimension_mismatch():
    st = SignatureState(2, 2)
    with pytest.raises(ShapeMismatchError):
        st.update([1.0, 2.0, 3.0])


def test_stream_equals_batch_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        dim = rng.integers(1, 5)
        depth = rng.integers(1, 5)
        path = random_path(rng, rng.integers(2, 20), dim)
        st = SignatureState(dim, depth)
        for delta in np.diff(path, axis=0):
            st.update(delta)
        ref = signature_batch(path, depth)
        for k in range(depth + 1):
            np.testing.assert_allclose(st.current.levels[k], ref.levels[k], atol=1e-12)
        assert st.steps_consumed == path.shape[0] - 1


# ---------------------------------------------------------------- ISC / reconstruct


def test_isc_single_group_matches_plain_stream():
    rng = np.random.default_rng(6)
    path = random_path(rng, 9, 3)
    records = isc_sequence(path, 3, ChannelSpec.full(3))
    st = SignatureState(3, 3)
    for rec in records:
        ref = st.update(path[rec.step_index + 1] - path[rec.step_index])
        for k in range(4):
            np.testing.assert_array_equal(
                rec.contribution().levels[k], ref.contribution().levels[k]
            )


def test_isc_singleton_groups_closed_form():
    # 1-D closed form per group: ΔS² = S¹·Δx + ½Δx².
    rng = np.random.default_rng(7)
    path = random_path(rng, 7, 2)
    records = isc_sequence(path, 2, ChannelSpec.of([0], [1]))
    for g in range(2):
        running = 0.0
        for n, rec in enumerate(records):
            dx = path[n + 1, g] - path[n, g]
            expected = running * dx + 0.5 * dx * dx
            np.testing.assert_allclose(
                rec.contributions[g].level(2)[0], expected, atol=1e-12
            )
            running += dx
        brute = signature_batch(path[:, [g]], 2)
        total = reconstruct(records, g, 1, 2)
        np.testing.assert_allclose(total.level(2), brute.level(2), atol=1e-12)


def test_isc_empty_path():
    assert isc_sequence(np.zeros((1, 2)), 2, ChannelSpec.full(2)) == []


def test_isc_group_out_of_range():
    with pytest.raises(ValueError):
        isc_sequence(L_PATH, 2, ChannelSpec.of([0, 5]))


def test_channel_spec_rejects_overlap_and_empty():
    with pytest.raises(ValidationError):
        ChannelSpec.of([0, 1], [1, 2])
    with pytest.raises(ValidationError):
        ChannelSpec.of([0], [])


def test_reconstruct_l_path():
    records = isc_sequence(L_PATH, 2, ChannelSpec.full(2))
    sig = reconstruct(records, 0, 2, 2)
    np.testing.assert_allclose(sig.level(2), [0.5, 1.0, 0.0, 0.5], atol=1e-15)
    assert sig.scalar == 1.0


def test_reconstruct_single_step_is_exp():
    rng = np.random.default_rng(8)
    delta = rng.uniform(-1, 1, size=3)
    path = np.vstack([np.zeros(3), delta])
    records = isc_sequence(path, 3, ChannelSpec.full(3))
    sig = reconstruct(records, 0, 3, 3)
    ref = algebra.tensor_exp(delta, 3)
    for k in range(4):
        np.testing.assert_allclose(sig.levels[k], ref.levels[k], atol=1e-15)


def test_reconstruct_rejects_permuted_records():
    records = isc_sequence(random_path(np.random.default_rng(9), 5, 2), 2, ChannelSpec.full(2))
    with pytest.raises(ValidationError):
        reconstruct([records[1], records[0]], 0, 2, 2)
    with pytest.raises(ValidationError):
        reconstruct([records[0], records[0]], 0, 2, 2)


def test_reconstruction_property_random_partitions():
    # Chen/ISC reconstruction across random dims, depths, and partitions.
    rng = np.random.default_rng(10)
    for _ in range(25):
        dim = int(rng.integers(1, 5))
        depth = int(rng.integers(1, 5))
        path = random_path(rng, int(rng.integers(2, 21)), dim)
        idx = rng.permutation(dim)
        cut = int(rng.integers(1, dim + 1))
        groups = [idx[:cut].tolist()]
        if cut < dim:
            groups.append(idx[cut:].tolist())
        channels = ChannelSpec.of(*groups)
        records = isc_sequence(path, depth, channels)
        for g, grp in enumerate(channels.groups):
            got = reconstruct(records, g, len(grp), depth)
            ref = signature_batch(path[:, list(grp)], depth)
            for k in range(depth + 1):
                scale = max(1.0, float(np.abs(ref.levels[k]).max()))
                assert np.abs(got.levels[k] - ref.levels[k]).max() / scale < 1e-10


# ---------------------------------------------------------------- oracle


def test_strict_sum_l_path():
    np.testing.assert_allclose(strict_iterated_sum(L_PATH, 2).level(2), [0, 1, 0, 0], atol=1e-15)


def test_strict_sum_level1_is_displacement():
    rng = np.random.default_rng(11)
    path = random_path(rng, 12, 3)
    np.testing.assert_allclose(
        strict_iterated_sum(path, 3).level(1), path[-1] - path[0], atol=1e-12
    )


def test_strict_sum_single_step_level2_empty():
    assert not strict_iterated_sum(np.array([[0.0, 0.0], [1.0, 2.0]]), 2).level(2).any()


def test_strict_sum_guard():
    with pytest.raises(ResourceLimitError):
        strict_iterated_sum(np.zeros((70, 2)), 2)
    with pytest.raises(ResourceLimitError):
        strict_iterated_sum(np.zeros((5, 2)), 5)


def test_strict_sum_bridge_level2():
    # Chen level 2 = strict level 2 + ½ Σ Δx ⊗ Δx.
    rng = np.random.default_rng(12)
    for _ in range(20):
        dim = int(rng.integers(1, 4))
        path = random_path(rng, int(rng.integers(2, 15)), dim)
        deltas = np.diff(path, axis=0)
        diag = 0.5 * sum(np.kron(d, d) for d in deltas)
        lhs = signature_batch(path, 2).level(2)
        rhs = strict_iterated_sum(path, 2).level(2) + diag
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# ---------------------------------------------------------------- invariants


def test_factorial_decay_bound():
    rng = np.random.default_rng(13)
    for _ in range(20):
        dim = int(rng.integers(1, 5))
        path = random_path(rng, int(rng.integers(2, 15)), dim)
        total_var = np.abs(np.diff(path, axis=0)).sum()
        sig = signature_batch(path, 4)
        fact = 1.0
        for k in range(1, 5):
            fact *= k
            assert algebra.level_norm(sig, k) <= total_var**k / fact + 1e-12


def test_reparameterization_invariance():
    rng = np.random.default_rng(14)
    path = random_path(rng, 8, 3)
    dup = np.insert(path, [2, 2, 5], path[[2, 2, 5]], axis=0)
    a = signature_batch(path, 3)
    b = signature_batch(dup, 3)
    for k in range(4):
        np.testing.assert_allclose(a.levels[k], b.levels[k], atol=1e-12)
    records = isc_sequence(dup, 3, ChannelSpec.full(3))
    zero_steps = np.flatnonzero(~np.diff(dup, axis=0).any(axis=1))
    assert len(zero_steps) == 3  # one per inserted duplicate point
    for n in zero_steps:
        for k in range(1, 4):
            assert not records[n].contribution().levels[k].any()


def test_first_level_contribution_is_increment():
    rng = np.random.default_rng(15)
    path = random_path(rng, 10, 4)
    records = isc_sequence(path, 2, ChannelSpec.full(4))
    for n, rec in enumerate(records):
        np.testing.assert_array_equal(rec.contribution().level(1), path[n + 1] - path[n])


# ---------------------------------------------------------------- universal fit


def _random_loop(rng, n_segments=8):
    pts = rng.uniform(-1, 1, size=(n_segments, 2))
    return np.vstack([pts, pts[0]])


def _shoelace(path):
    x, y = path[:, 0], path[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def test_fit_recovers_signature_coordinate():
    rng = np.random.default_rng(16)
    paths = [random_path(rng, 6, 2) for _ in range(40)]
    targets = [signature_batch(p, 1).level(1)[0] for p in paths]
    report = universal_fit(paths, targets, depth=1)
    assert report.rmse_by_depth[1] < 1e-8


def test_fit_signed_area_of_loops():
    rng = np.random.default_rng(17)
    paths = [_random_loop(rng) for _ in range(60)]
    targets = [_shoelace(p) for p in paths]
    report = universal_fit(paths, targets, depth=2)
    assert report.rmse_by_depth[2] <= 1e-6
    assert report.rmse_by_depth[2] <= report.rmse_by_depth[1]


def test_fit_constant_target_intercept_only():
    rng = np.random.default_rng(18)
    paths = [random_path(rng, 5, 2) for _ in range(10)]
    report = universal_fit(paths, [2.5] * 10, depth=1)
    assert report.rmse < 1e-7


def test_fit_monotone_rmse():
    rng = np.random.default_rng(19)
    paths = [random_path(rng, 7, 2) for _ in range(50)]
    targets = [float(np.linalg.norm(p[-1] - p[0])) for p in paths]
    report = universal_fit(paths, targets, depth=3)
    curve = [report.rmse_by_depth[k] for k in range(1, 4)]
    assert all(curve[i + 1] <= curve[i] + 1e-12 for i in range(len(curve) - 1))


def test_fit_degenerate_without_damping():
    # Loops have an all-zero level-1 block: the undamped normal equations
    # are exactly singular.
    rng = np.random.default_rng(20)
    paths = [_random_loop(rng) for _ in range(20)]
    targets = [_shoelace(p) for p in paths]
    with pytest.raises(SingularSystemError):
        universal_fit(paths, targets, depth=2, ridge=0.0)


def test_fit_requires_two_paths():
    with pytest.raises(ValueError):
        universal_fit([L_PATH], [1.0], depth=1)
