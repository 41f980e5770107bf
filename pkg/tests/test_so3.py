import numpy as np
import pytest

from binpose.so3 import (Pose, SymmetryDescriptor, SymmetryGroup,
                         UnsupportedSymmetryError, axis_rotation,
                         build_axis_mask, build_symmetry_group, classify_axes,
                         matrix_to_quat, quat_from_axis_angle, quat_multiply,
                         quat_normalize, quat_to_matrix, random_quat,
                         symmetric_pose_distance)


def rodrigues(axis, angle):
    """Independent rotation-matrix oracle."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0, -axis[2], axis[1]],
                  [axis[2], 0, -axis[0]],
                  [-axis[1], axis[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * (K @ K)


# ---------------------------------------------------------------------------
# quaternion <-> matrix


def test_identity_quat_gives_identity_matrix():
    assert np.allclose(quat_to_matrix([1, 0, 0, 0]), np.eye(3), atol=1e-12)


def test_z_flip_quat_matches_reference_matrix():
    # 180 degrees about z
    R = quat_to_matrix([0, 0, 0, 1])
    assert np.allclose(R, np.diag([-1.0, -1.0, 1.0]), atol=1e-12)


def test_quat_to_matrix_sign_invariance():
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = random_quat(rng)
        assert np.allclose(quat_to_matrix(q), quat_to_matrix(-q), atol=1e-15)


def test_quat_to_matrix_matches_rodrigues():
    rng = np.random.default_rng(1)
    for _ in range(100):
        axis = rng.normal(size=3)
        angle = rng.uniform(-np.pi, np.pi)
        q = quat_from_axis_angle(axis, angle)
        assert np.abs(quat_to_matrix(q) - rodrigues(axis, angle)).max() < 1e-9


def test_quat_to_matrix_rejects_non_unit():
    with pytest.raises(ValueError):
        quat_to_matrix([1.0, 0.0, 0.0, 1e-2])


def test_matrix_to_quat_identity():
    assert np.allclose(matrix_to_quat(np.eye(3)), [1, 0, 0, 0], atol=1e-15)


def test_matrix_to_quat_z_flip_canonical_sign():
    q = matrix_to_quat(np.diag([-1.0, -1.0, 1.0]))
    assert np.allclose(q, [0, 0, 0, 1], atol=1e-15)


def test_matrix_quat_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        q = random_quat(rng)
        q2 = matrix_to_quat(quat_to_matrix(q))
        assert np.abs(q - q2).max() < 1e-9


def test_matrix_to_quat_rejects_non_orthonormal():
    bad = np.eye(3)
    bad[0, 1] = 1e-3
    with pytest.raises(ValueError):
        matrix_to_quat(bad)
    with pytest.raises(ValueError):
        matrix_to_quat(np.diag([1.0, 1.0, -1.0]))  # det -1


def test_canonicalization_idempotent_and_sign_stable():
    rng = np.random.default_rng(3)
    for _ in range(50):
        q = random_quat(rng)
        assert np.array_equal(quat_normalize(q), q)
        assert np.array_equal(quat_normalize(-q), q)
    # w == 0 edge: first nonzero vector component must be positive
    q = quat_normalize([0.0, -1.0, 0.0, 0.0])
    assert q[1] == 1.0


# ---------------------------------------------------------------------------
# symmetry descriptors / classification


def test_descriptor_validation():
    with pytest.raises(ValueError):
        SymmetryDescriptor(dz_deg=7.0)       # 360/7 not an integer
    with pytest.raises(ValueError):
        SymmetryDescriptor(dz_deg=360.0)
    with pytest.raises(ValueError):
        SymmetryDescriptor(ts_deg=0.0)
    SymmetryDescriptor(dz_deg=180.0)         # fine


def test_classify_axes_finite_none_infinite():
    assert classify_axes(SymmetryDescriptor(0, 0, 180, 15)) == ("none", "none", "finite")
    assert classify_axes(SymmetryDescriptor(0, 0, 1, 15)) == ("none", "none", "infinite")
    assert classify_axes(SymmetryDescriptor(0, 0, 0, 15)) == ("none", "none", "none")
    # a small step angle counts as continuous symmetry
    assert classify_axes(SymmetryDescriptor(0, 0, 5, 15)) == ("none", "none", "infinite")


# ---------------------------------------------------------------------------
# symmetry groups


def test_group_two_fold_z():
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 180, 15))
    assert len(g) == 2
    assert np.allclose(g.matrices[0], np.eye(3), atol=1e-12)
    assert np.allclose(g.matrices[1], [[-1, 0, 0], [0, -1, 0], [0, 0, 1]], atol=1e-12)


def test_group_no_symmetry_is_identity_only():
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 0, 15))
    assert len(g) == 1
    assert np.allclose(g.matrices[0], np.eye(3))


def test_group_infinite_axis_contributes_nothing():
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 5, 15))
    assert len(g) == 1


def test_group_four_fold_closed():
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 90, 15))
    assert len(g) == 4
    # brute-force closure check
    for a in g.matrices:
        for b in g.matrices:
            prod = a @ b
            assert min(np.abs(prod - m).max() for m in g.matrices) < 1e-6


def test_group_multi_axis_closure():
    # 180 about x and z closes to the 4-element dihedral set
    g = build_symmetry_group(SymmetryDescriptor(180, 0, 180, 15))
    assert len(g) == 4
    for a in g.matrices:
        for b in g.matrices:
            prod = a @ b
            assert min(np.abs(prod - m).max() for m in g.matrices) < 1e-6


def test_group_no_duplicates():
    g = build_symmetry_group(SymmetryDescriptor(180, 90, 180, 15))
    n = len(g)
    for i in range(n):
        for j in range(i + 1, n):
            assert np.abs(g.matrices[i] - g.matrices[j]).max() > 1e-6


def test_group_closure_cap_raises():
    # 90 about z with 120 about x generates an infinite rotation set
    with pytest.raises(UnsupportedSymmetryError):
        build_symmetry_group(SymmetryDescriptor(120, 0, 90, 15))


# ---------------------------------------------------------------------------
# axis masks


def test_axis_mask_cases():
    assert np.array_equal(build_axis_mask(SymmetryDescriptor(0, 0, 5, 15)), [0, 0, 1])
    assert np.array_equal(build_axis_mask(SymmetryDescriptor(0, 0, 0, 15)), [1, 1, 1])
    assert np.array_equal(build_axis_mask(SymmetryDescriptor(0, 0, 180, 15)), [1, 1, 1])
    assert np.array_equal(build_axis_mask(SymmetryDescriptor(1, 1, 1, 15)), [0, 0, 0])


def test_axis_mask_two_infinite_axes_rejected():
    with pytest.raises(ValueError):
        build_axis_mask(SymmetryDescriptor(1, 1, 0, 15))


# ---------------------------------------------------------------------------
# symmetric pose distance


def cube_model():
    side = np.array([-10.0, 0.0, 10.0])
    gx, gy, gz = np.meshgrid(side, side * 1.5, side * 2.0, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def test_distance_zero_for_equal_poses():
    model = cube_model()
    g = SymmetryGroup.identity()
    pose = Pose(quat_normalize([1, 2, 3, 4]), [5, 6, 7])
    per_point, mean = symmetric_pose_distance(model, pose, pose, g, np.ones(3))
    assert mean < 1e-9
    assert per_point.max() < 1e-9


def test_distance_zero_for_symmetric_equivalent():
    model = cube_model()
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 180, 15))
    rng = np.random.default_rng(4)
    q = random_quat(rng)
    R = quat_to_matrix(q)
    gt = Pose(q, [1, 2, 3])
    pred = Pose(matrix_to_quat(R @ g.matrices[1]), [1, 2, 3])
    _, mean = symmetric_pose_distance(model, gt, pred, g, np.ones(3))
    assert mean < 1e-9


def test_distance_matches_naive_enumeration():
    model = cube_model()
    g = build_symmetry_group(SymmetryDescriptor(180, 0, 90, 15))
    assert len(g) <= 8
    mask = np.ones(3)
    rng = np.random.default_rng(5)
    for _ in range(20):
        gt = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
        pred = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
        per_point, mean = symmetric_pose_distance(model, gt, pred, g, mask)
        # independent enumeration
        best_mean = np.inf
        best_pp = None
        Rg, Rp = gt.rotation, pred.rotation
        for s in g.matrices:
            pp = np.array([np.linalg.norm((Rg @ s @ m + gt.t) - (Rp @ m + pred.t))
                           for m in model])
            if pp.mean() < best_mean:
                best_mean = pp.mean()
                best_pp = pp
        assert mean == pytest.approx(best_mean, abs=1e-12)
        assert np.abs(per_point - best_pp).max() < 1e-9


def test_distance_invariant_under_gt_symmetry_substitution():
    model = cube_model()
    g = build_symmetry_group(SymmetryDescriptor(0, 0, 90, 15))
    mask = np.ones(3)
    rng = np.random.default_rng(6)
    for _ in range(20):
        gt = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
        pred = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
        _, base = symmetric_pose_distance(model, gt, pred, g, mask)
        for s in g.matrices:
            gt_s = Pose(matrix_to_quat(gt.rotation @ s), gt.t)
            _, mean = symmetric_pose_distance(model, gt_s, pred, g, mask)
            assert abs(mean - base) < 1e-9


def test_distance_invariant_under_infinite_axis_spin():
    model = cube_model()
    desc = SymmetryDescriptor(0, 0, 5, 15)
    g = build_symmetry_group(desc)
    mask = build_axis_mask(desc)
    rng = np.random.default_rng(7)
    gt = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
    pred = Pose(random_quat(rng), rng.uniform(-50, 50, 3))
    _, base = symmetric_pose_distance(model, gt, pred, g, mask)
    for _ in range(100):
        spin = axis_rotation(2, rng.uniform(0, 360))
        gt_s = Pose(matrix_to_quat(gt.rotation @ spin), gt.t)
        pred_s = Pose(matrix_to_quat(pred.rotation @ spin), pred.t)
        _, m1 = symmetric_pose_distance(model, gt_s, pred, g, mask)
        _, m2 = symmetric_pose_distance(model, gt, pred_s, g, mask)
        assert abs(m1 - base) < 1e-9
        assert abs(m2 - base) < 1e-9


def test_distance_rejects_empty_model():
    with pytest.raises(ValueError):
        symmetric_pose_distance(np.empty((0, 3)), Pose([1, 0, 0, 0], [0, 0, 0]),
                                Pose([1, 0, 0, 0], [0, 0, 0]),
                                SymmetryGroup.identity(), np.ones(3))


def test_pose_composition_sanity():
    # quat_multiply composes the same way the matrices do
    rng = np.random.default_rng(8)
    for _ in range(20):
        a, b = random_quat(rng), random_quat(rng)
        assert np.abs(quat_to_matrix(quat_normalize(quat_multiply(a, b)))
                      - quat_to_matrix(a) @ quat_to_matrix(b)).max() < 1e-12
