import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import project_loop, random_rotation, rotation_row_form
from perspective_face.errors import BehindCamera, FrameMismatch, NotARotation, SizeMismatch
from perspective_face.geometry import (CAMERA, CameraIntrinsics, LandmarkSet2D, Pose6DoF, VertexSet,
                                       axis_angle_from_rotation, geodesic_distance, perspective_project,
                                       project_world, rotation_from_axis_angle, rotation_from_euler,
                                       world_to_camera)

finite = st.floats(-10, 10, allow_nan=False)


def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0, 1, 0, 0)
    with pytest.raises(ValueError):
        CameraIntrinsics(1, -1, 0, 0)
    with pytest.raises(ValueError):
        CameraIntrinsics(1, 1, np.inf, 0)
    assert np.array_equal(CameraIntrinsics(2, 3, 4, 5).matrix, [[2, 0, 4], [0, 3, 5], [0, 0, 1]])


def test_pose_rejects_non_rotations():
    with pytest.raises(NotARotation):
        Pose6DoF(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(NotARotation):
        Pose6DoF(np.eye(3) * 1.001, np.zeros(3))
    with pytest.raises(SizeMismatch):
        Pose6DoF(np.eye(3), np.zeros(2))
    pose = Pose6DoF.identity()
    with pytest.raises(ValueError):
        pose.rotation[0, 0] = 2.0


def test_point_sets_are_checked():
    with pytest.raises(SizeMismatch):
        VertexSet(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        VertexSet([[0.0, np.nan, 0.0]])
    with pytest.raises(SizeMismatch):
        LandmarkSet2D(np.zeros((3, 3)))
    assert len(VertexSet(np.zeros((5, 3)))) == 5


def test_zero_axis_angle_is_identity():
    assert np.array_equal(rotation_from_axis_angle([0, 0, 0]), np.eye(3))
    assert np.array_equal(axis_angle_from_rotation(np.eye(3)), np.zeros(3))


def test_quarter_turn_about_z_row_convention():
    R = rotation_from_axis_angle([0, 0, np.pi / 2])
    assert np.allclose(np.array([1.0, 0, 0]) @ R, [0, 1, 0], atol=1e-15)


def test_axis_angle_round_trips():
    w = np.array([np.pi / 3, 0, 0])
    assert np.allclose(axis_angle_from_rotation(rotation_from_axis_angle(w)), w, atol=1e-12)
    w = np.array([0.1, -0.2, 0.3])
    assert np.allclose(axis_angle_from_rotation(rotation_from_axis_angle(w)), w, atol=1e-9)


def test_half_turn_about_z():
    w = axis_angle_from_rotation(np.diag([-1.0, -1.0, 1.0]))
    assert abs(np.linalg.norm(w) - np.pi) < 1e-6
    assert np.allclose(np.abs(w / np.linalg.norm(w)), [0, 0, 1], atol=1e-12)
    assert np.allclose(rotation_from_axis_angle(w), np.diag([-1.0, -1.0, 1.0]), atol=1e-12)


def test_half_turn_tie_break_is_positive():
    for axis in np.eye(3):
        R = rotation_from_axis_angle(-np.pi * axis)
        w = axis_angle_from_rotation(R)
        assert np.allclose(w, np.pi * axis, atol=1e-9)


def test_matches_power_series_oracle(rng):
    for _ in range(200):
        w = rng.normal(size=3) * rng.uniform(0, 3)
        assert np.allclose(rotation_from_axis_angle(w), rotation_row_form(w), atol=1e-13)


def test_small_angle_branch_is_continuous():
    for t in (1e-3, 1.01e-4, 0.99e-4, 1e-6, 1e-10):
        w = t * np.array([0.6, -0.8, 0.0])
        assert np.allclose(rotation_from_axis_angle(w), rotation_row_form(w), atol=1e-15)
        assert np.allclose(axis_angle_from_rotation(rotation_from_axis_angle(w)), w, rtol=1e-9, atol=1e-18)


def test_round_trip_over_many_random_vectors():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        d = rng.normal(size=3)
        w = d / np.linalg.norm(d) * rng.uniform(1e-6, np.pi - 0.01)
        worst = max(worst, np.abs(axis_angle_from_rotation(rotation_from_axis_angle(w)) - w).max())
    assert worst < 1e-9


@given(arrays(float, 3, elements=st.floats(-3, 3)))
def test_rotation_is_orthonormal(w):
    R = rotation_from_axis_angle(w)
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-12
    assert abs(np.linalg.det(R) - 1) < 1e-12


def test_euler_composition_order():
    yaw, pitch, roll = 0.3, -0.2, 0.1
    R = rotation_from_euler(yaw, pitch, roll)
    Rp = rotation_from_euler(0, pitch, 0)
    Ry = rotation_from_euler(yaw, 0, 0)
    Rr = rotation_from_euler(0, 0, roll)
    # row convention: pitch first, then yaw, then roll
    assert np.allclose(R, Rp @ Ry @ Rr, atol=1e-15)
    assert np.allclose(rotation_from_euler(0, 0, 0.4), rotation_from_axis_angle([0, 0, 0.4]), atol=1e-15)
    assert np.allclose(rotation_from_euler(0.4, 0, 0), rotation_from_axis_angle([0, 0.4, 0]), atol=1e-15)
    assert np.allclose(rotation_from_euler(0, 0.4, 0), rotation_from_axis_angle([0.4, 0, 0]), atol=1e-15)


def test_geodesic_distance(rng):
    assert geodesic_distance(np.eye(3), np.eye(3)) == 0.0
    for _ in range(50):
        R = random_rotation(rng)
        w = rng.normal(size=3)
        w *= rng.uniform(0, np.pi - 1e-3) / np.linalg.norm(w)
        d = geodesic_distance(R, R @ rotation_from_axis_angle(w))
        assert abs(d - np.linalg.norm(w)) < 1e-9
    assert abs(geodesic_distance(np.eye(3), np.diag([-1.0, -1.0, 1.0])) - np.pi) < 1e-12


def test_world_to_camera_examples():
    v = VertexSet([[1.0, 0.0, 0.0]])
    assert np.array_equal(world_to_camera(v, Pose6DoF.identity()).points, v.points)
    out = world_to_camera(v, Pose6DoF(np.eye(3), [0, 0, 0.5]))
    assert np.array_equal(out.points, [[1.0, 0.0, 0.5]])
    assert out.frame == CAMERA
    out = world_to_camera(v, Pose6DoF(rotation_from_axis_angle([0, 0, np.pi / 2]), np.zeros(3)))
    assert np.allclose(out.points, [[0, 1, 0]], atol=1e-12)


def test_projection_examples():
    K1 = CameraIntrinsics(1, 1, 0, 0)
    assert np.array_equal(perspective_project(VertexSet([[0, 0, 1.0]], CAMERA), K1).points, [[0, 0]])
    K = CameraIntrinsics(1000, 1000, 400, 400)
    p = perspective_project(VertexSet([[0.1, -0.05, 0.5]], CAMERA), K).points
    assert np.allclose(p, [[600, 300]], rtol=0, atol=1e-12)
    with pytest.raises(BehindCamera):
        perspective_project(VertexSet([[0, 0, -0.2]], CAMERA), K)
    with pytest.raises(BehindCamera):
        perspective_project(VertexSet([[0, 0, 1e-9]], CAMERA), K)
    assert np.array_equal(project_world(VertexSet([[0, 0, 2.0]]), Pose6DoF.identity(), K).points, [[400, 400]])


def test_frame_tags_are_enforced():
    K = CameraIntrinsics(1000, 1000, 400, 400)
    world = VertexSet([[0, 0, 1.0]])
    cam = VertexSet([[0, 0, 1.0]], CAMERA)
    with pytest.raises(FrameMismatch):
        perspective_project(world, K)
    with pytest.raises(FrameMismatch):
        world_to_camera(cam, Pose6DoF.identity())
    with pytest.raises(FrameMismatch):
        project_world(cam, Pose6DoF.identity(), K)


def test_project_world_matches_composition_and_loop_oracle(rng):
    K = CameraIntrinsics(900, 1100, 380, 410)
    for _ in range(20):
        R = random_rotation(rng)
        T = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.4, 0.9)])
        v = VertexSet(rng.uniform(-0.1, 0.1, size=(30, 3)))
        pose = Pose6DoF(R, T)
        a = project_world(v, pose, K).points
        assert np.array_equal(a, perspective_project(world_to_camera(v, pose), K).points)
        assert np.allclose(a, project_loop(v.points, R, T, 900, 1100, 380, 410), rtol=0, atol=1e-9)


@given(arrays(float, (8, 3), elements=finite), st.integers(0, 2**31))
def test_rigid_motion_preserves_pairwise_distances(pts, seed):
    R = random_rotation(np.random.default_rng(seed))
    out = world_to_camera(VertexSet(pts), Pose6DoF(R, np.zeros(3))).points
    d0 = np.linalg.norm(pts[:, None] - pts[None], axis=-1)
    d1 = np.linalg.norm(out[:, None] - out[None], axis=-1)
    assert np.abs(d0 - d1).max() < 1e-9


@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(0.1, 5), st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_projection_scale_invariance(x, y, z, lam):
    # powers of two keep the scaled coordinates exact, so the quotients agree bit for bit
    K = CameraIntrinsics(1000, 1000, 400, 400)
    a = perspective_project(VertexSet([[x, y, z]], CAMERA), K).points
    b = perspective_project(VertexSet([[lam * x, lam * y, lam * z]], CAMERA), K).points
    assert np.array_equal(a, b)


@given(st.floats(0.1, 3), st.floats(0.1, 3))
def test_projection_scale_invariance_general_factor(z, lam):
    K = CameraIntrinsics(1000, 1000, 400, 400)
    a = perspective_project(VertexSet([[0.1, -0.2, z]], CAMERA), K).points
    b = perspective_project(VertexSet([[0.1 * lam, -0.2 * lam, z * lam]], CAMERA), K).points
    assert np.allclose(a, b, rtol=1e-13, atol=1e-10)
