import json
import math

import numpy as np
import pytest

from markerfind.errors import (
    BehindCameraError,
    DegenerateError,
    InfinityError,
    NumericalError,
    ParameterError,
)
from markerfind.geometry import (
    UNIT_SQUARE,
    CameraIntrinsics,
    Homography,
    Pose,
    apply_homography,
    estimate_homography,
    fit_homography,
    homography_from_pose,
    nearest_rotation,
    pose_from_homography,
    project,
    rotation_from_euler,
    solve_linear,
    warp_inverse,
)
from markerfind.image_core import GrayImage


def random_homography(rng) -> np.ndarray:
    while True:
        H = np.eye(3) + rng.normal(0, 0.3, (3, 3))
        H[2, :2] = rng.normal(0, 0.2, 2)
        # keep the unit square in front: all w > 0.2
        w = UNIT_SQUARE @ H[2, :2] + H[2, 2]
        if np.all(w > 0.2) and abs(np.linalg.det(H)) > 0.05:
            return H


def random_rotation(rng, max_tilt_deg: float) -> np.ndarray:
    tilt = math.radians(rng.uniform(0, max_tilt_deg))
    axis_angle = rng.uniform(0, 2 * math.pi)
    axis = np.array([math.cos(axis_angle), math.sin(axis_angle), 0.0])
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    tilt_R = np.eye(3) + math.sin(tilt) * k + (1 - math.cos(tilt)) * k @ k
    return tilt_R @ rotation_from_euler(0, 0, rng.uniform(-math.pi, math.pi))


K0 = CameraIntrinsics(fx=800, fy=780, cx=320, cy=240, skew=0.5)


# ------------------------------------------------------------ linear solve


def test_solve_linear_matches_numpy():
    rng = np.random.default_rng(1)
    for _ in range(20):
        A = rng.normal(size=(8, 8))
        b = rng.normal(size=8)
        np.testing.assert_allclose(solve_linear(A, b), np.linalg.solve(A, b), rtol=1e-9, atol=1e-10)


def test_solve_linear_singular():
    with pytest.raises(NumericalError):
        solve_linear(np.ones((3, 3)), np.ones(3))


# ------------------------------------------------------------ homography


def test_identity_from_unit_square():
    H = estimate_homography(UNIT_SQUARE, UNIT_SQUARE)
    np.testing.assert_allclose(H.m, np.eye(3), atol=1e-12)


def test_scaled_square():
    H = estimate_homography(UNIT_SQUARE, 2 * UNIT_SQUARE)
    np.testing.assert_allclose(H.m, np.diag([2.0, 2.0, 1.0]), atol=1e-12)


def test_recovers_random_homography():
    rng = np.random.default_rng(2)
    for _ in range(200):
        H0 = random_homography(rng)
        dst = Homography(H0).map(UNIT_SQUARE)
        H = estimate_homography(UNIT_SQUARE, dst)
        ref = H0 / H0[2, 2]
        rel = np.abs(H.m - ref).max() / np.abs(ref).max()
        assert rel < 1e-8


def test_estimate_degenerate():
    with pytest.raises(DegenerateError):
        estimate_homography(UNIT_SQUARE, [[0, 0], [1, 1], [2, 2], [0, 3]])
    with pytest.raises(DegenerateError):
        estimate_homography([[0, 0], [0, 0], [1, 1], [1, 0]], UNIT_SQUARE)
    with pytest.raises(ParameterError):
        estimate_homography(UNIT_SQUARE[:3], UNIT_SQUARE[:3])


def test_fit_homography_least_squares_exact_data():
    rng = np.random.default_rng(3)
    H0 = random_homography(rng)
    src = rng.uniform(0, 1, (12, 2))
    H = fit_homography(src, Homography(H0).map(src))
    np.testing.assert_allclose(H.m, H0 / H0[2, 2], rtol=1e-8, atol=1e-9)


def test_apply_examples():
    assert apply_homography(Homography.identity(), (4.5, -2)).tolist() == [4.5, -2]
    T = Homography([[1, 0, 3], [0, 1, -2], [0, 0, 1]])
    assert apply_homography(T, (0, 0)).tolist() == [3, -2]
    P = Homography([[1, 0, 0], [0, 1, 0], [0.1, 0, 1]])
    # (10, 0, 1) -> (10, 0, 2) -> (5, 0)
    assert apply_homography(P, (10, 0)).tolist() == [5, 0]


def test_apply_at_infinity():
    P = Homography([[1, 0, 0], [0, 1, 0], [0.1, 0, 1]])
    with pytest.raises(InfinityError):
        apply_homography(P, (-10, 0))


def test_inverse_round_trip():
    rng = np.random.default_rng(4)
    for _ in range(100):
        H = Homography(random_homography(rng))
        p = rng.uniform(0, 1, 2)
        back = apply_homography(H.inverse(), apply_homography(H, p))
        assert np.abs(back - p).max() < 1e-8


def test_homography_normalisation_and_singular():
    H = Homography(np.diag([2.0, 4.0, 2.0]))
    assert H.m[2, 2] == 1.0
    # m[2,2] = 0 falls back to unit Frobenius norm
    Z = Homography([[0, 1, 0], [1, 0, 0], [0, 1, 0]] + np.array([[0, 0, 1], [0, 0, 0], [0, 0, 0]]))
    assert Z.m[2, 2] == 0 and np.isclose(np.linalg.norm(Z.m), 1.0)
    with pytest.raises(NumericalError):
        Homography([[1, 2, 3], [2, 4, 6], [0, 0, 1]])


# ------------------------------------------------------------ warp


def test_warp_identity_exact():
    rng = np.random.default_rng(5)
    img = GrayImage(rng.integers(0, 256, (13, 17)))
    assert warp_inverse(img, Homography.identity(), 17, 13) == img


def test_warp_constant_under_scale():
    img = GrayImage.filled(40, 40, 77)
    out = warp_inverse(img, Homography(np.diag([2.0, 2.0, 1.0])), 19, 19)
    assert np.all(out.data == 77)


def test_warp_outside_is_zero_and_singular_rejected():
    img = GrayImage.filled(4, 4, 200)
    out = warp_inverse(img, Homography([[1, 0, 10], [0, 1, 0], [0, 0, 1]]), 4, 4)
    assert np.all(out.data == 0)
    with pytest.raises(ParameterError):
        warp_inverse(img, Homography.identity(), 0, 3)


def test_warp_translation_matches_shift():
    rng = np.random.default_rng(6)
    img = GrayImage(rng.integers(0, 256, (20, 20)))
    out = warp_inverse(img, Homography([[1, 0, 3], [0, 1, 2], [0, 0, 1]]), 10, 10)
    np.testing.assert_array_equal(out.data, img.data[2:12, 3:13])


# ------------------------------------------------------------ projection / pose


def test_project_examples():
    K = CameraIntrinsics(1, 1, 0, 0)
    pose = Pose(np.eye(3), [0, 0, 1])
    assert project(K, pose, (0, 0, 0)).tolist() == [0, 0]
    assert project(K, pose, (0.5, 0, 0)).tolist() == [0.5, 0]


def test_project_behind_camera():
    with pytest.raises(BehindCameraError):
        project(K0, Pose(np.eye(3), [0, 0, -1]), (0, 0, 0))
    with pytest.raises(BehindCameraError):
        project(K0, Pose(np.eye(3), [0, 0, 0]), (0, 0, 0))


def test_intrinsics_json_mapping(tmp_path):
    path = tmp_path / "cam.json"
    path.write_text(json.dumps({"fx": 700, "fy": 710, "cx": 300, "cy": 200, "skew": 0}))
    K = CameraIntrinsics.from_json(path)
    np.testing.assert_array_equal(K.C, [[700, 0, 300, 0], [0, 710, 200, 0], [0, 0, 1, 0]])
    with pytest.raises(ParameterError):
        CameraIntrinsics.from_dict({"fx": 1})
    with pytest.raises(ParameterError):
        CameraIntrinsics(0, 1, 0, 0)


def test_frontal_pose_recovered():
    K = CameraIntrinsics(800, 800, 320, 240)
    H = homography_from_pose(K, Pose(np.eye(3), [0, 0, 2]))
    pose = pose_from_homography(H, K)
    np.testing.assert_allclose(pose.R, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(pose.T, [0, 0, 2], atol=1e-6)


def synth_pose(rng, max_tilt=60.0) -> Pose:
    R = random_rotation(rng, max_tilt)
    T = np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(2, 10)])
    return Pose(R, T)


def test_pose_round_trip_through_project():
    rng = np.random.default_rng(8)
    for _ in range(200):
        pose = synth_pose(rng)
        img_pts = np.array([project(K0, pose, (x, y, 0)) for x, y in UNIT_SQUARE])
        H = estimate_homography(UNIT_SQUARE, img_pts)
        got = pose_from_homography(H, K0)
        assert np.linalg.norm(got.R - pose.R) < 1e-4
        assert np.linalg.norm(got.T - pose.T) / np.linalg.norm(pose.T) < 1e-4
        assert np.linalg.norm(got.R.T @ got.R - np.eye(3)) < 1e-6
        assert abs(np.linalg.det(got.R) - 1) < 1e-6 and got.T[2] > 0
        reproj = np.array([project(K0, got, (x, y, 0)) for x, y in UNIT_SQUARE])
        assert np.abs(reproj - img_pts).max() < 0.01


def test_pose_scale_invariance():
    rng = np.random.default_rng(9)
    for _ in range(50):
        pose = synth_pose(rng)
        H = homography_from_pose(K0, pose)
        base = pose_from_homography(H, K0)
        for s in (-2.0, 0.5):
            # powers of two rescale without rounding, so the result is bit-identical
            other = pose_from_homography(Homography(s * H.m), K0)
            assert np.array_equal(other.R, base.R) and np.array_equal(other.T, base.T)
        other = pose_from_homography(Homography(10.0 * H.m), K0)
        np.testing.assert_allclose(other.R, base.R, rtol=0, atol=1e-12)
        np.testing.assert_allclose(other.T, base.T, rtol=1e-12, atol=0)


def test_pose_degenerate():
    # a huge focal length shrinks the first two columns of K^-1 H below 1e-9
    K = CameraIntrinsics(1e12, 1e12, 0, 0)
    with pytest.raises(DegenerateError):
        pose_from_homography(Homography.identity(), K)


def test_nearest_rotation_against_svd():
    rng = np.random.default_rng(10)
    for _ in range(50):
        R = random_rotation(rng, 80)
        M = R + rng.normal(0, 0.05, (3, 3))
        U, _, Vt = np.linalg.svd(M)
        np.testing.assert_allclose(nearest_rotation(M), U @ Vt, atol=1e-12)
