"""Rigid transforms, rotations and pinhole projection.

Points are stored as rows, and a pose maps a world point ``v`` to the camera
frame as ``v @ R + T``.  Every rotation matrix in this package is stored for
that row-vector convention, which is the transpose of the usual column form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, FrameMismatch, NotARotation, SizeMismatch

WORLD = "world"
CAMERA = "camera"

MIN_DEPTH = 1e-9
ORTHONORMAL_TOL = 1e-9


def _frozen(a, shape_tail, name, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise SizeMismatch(f"{name}: expected shape (N, {', '.join(map(str, shape_tail))}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError("principal point must be finite")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose6DoF:
    """Rotation (row-vector convention) and translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float)
        T = np.array(self.translation, dtype=float).reshape(-1)
        if R.shape != (3, 3) or T.shape != (3,):
            raise SizeMismatch(f"pose needs a 3x3 rotation and a 3-vector, got {R.shape} and {T.shape}")
        check_rotation(R, ORTHONORMAL_TOL)
        if not np.all(np.isfinite(T)):
            raise ValueError("translation must be finite")
        R.setflags(write=False)
        T.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", T)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))


@dataclass(frozen=True, eq=False)
class VertexSet:
    """N x 3 points in meters, tagged with the frame they live in."""

    points: np.ndarray
    frame: str = WORLD

    def __post_init__(self):
        if self.frame not in (WORLD, CAMERA):
            raise ValueError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "points", _frozen(self.points, (3,), "VertexSet"))

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class LandmarkSet2D:
    """N x 2 image points in pixels."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _frozen(self.points, (2,), "LandmarkSet2D"))

    def __len__(self):
        return self.points.shape[0]


def skew(w):
    """Cross-product matrix: ``skew(a) @ b == np.cross(a, b)``."""
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def check_rotation(R, tol=1e-6):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise NotARotation(f"expected a finite 3x3 matrix, got shape {R.shape}")
    err = np.abs(R.T @ R - np.eye(3)).max()
    if err > tol:
        raise NotARotation(f"matrix is not orthonormal (max |R^T R - I| = {err:.3g})")
    det = np.linalg.det(R)
    if abs(det - 1.0) > tol:
        raise NotARotation(f"determinant is {det:.12g}, expected +1")


def rotation_from_axis_angle(omega):
    """Rotation matrix (row convention) turning row vectors by ``|omega|`` about ``omega``.

    ``p @ rotation_from_axis_angle(w)`` is ``p`` rotated right-handedly about
    the axis ``w / |w|``, so the result is the transpose of the classic
    Rodrigues matrix.
    """
    w = np.asarray(omega, dtype=float).reshape(3)
    theta2 = float(w @ w)
    theta = np.sqrt(theta2)
    if theta < 1e-4:
        # Taylor terms, accurate to well below 1e-16 at this angle.
        a = 1.0 - theta2 / 6.0 + theta2 * theta2 / 120.0
        b = 0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    W = skew(w)
    return np.eye(3) - a * W + b * (W @ W)


def axis_angle_from_rotation(R):
    """Inverse of :func:`rotation_from_axis_angle`, returning ``omega`` with ``|omega| <= pi``.

    At an angle of exactly pi the axis sign is ambiguous; the axis whose
    largest-magnitude component is positive is returned.
    """
    R = np.asarray(R, dtype=float)
    check_rotation(R, 1e-6)
    C = R.T  # column-convention matrix
    s_axis = 0.5 * np.array([C[2, 1] - C[1, 2], C[0, 2] - C[2, 0], C[1, 0] - C[0, 1]])
    s = np.linalg.norm(s_axis)
    c = 0.5 * (np.trace(C) - 1.0)
    theta = np.arctan2(s, c)

    if c > 0 or s > 1e-5:
        if theta < 1e-8:
            return s_axis * (1.0 + theta * theta / 6.0)
        return s_axis * (theta / s)

    # Near pi: the axis comes from the symmetric part, (C + C^T)/2 - cI = (1 - c) a a^T.
    B = 0.5 * (C + C.T) - c * np.eye(3)
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if s > 1e-12:
        if axis @ s_axis < 0:
            axis = -axis
    elif axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    return axis * theta


def rotation_from_euler(yaw, pitch, roll):
    """Row-convention rotation from angles in radians.

    Composition is Z(roll) * Y(yaw) * X(pitch) in column form, so pitch is
    applied first; the returned matrix is its transpose.
    """
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    cr, sr = np.cos(roll), np.sin(roll)
    Rx = np.array([[1, 0, 0], [0, cp, -sp], [0, sp, cp]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cr, -sr, 0], [sr, cr, 0], [0, 0, 1]])
    return (Rz @ Ry @ Rx).T


def geodesic_distance(Ra, Rb):
    """Angle in radians of the relative rotation between ``Ra`` and ``Rb``."""
    D = np.asarray(Ra).T @ np.asarray(Rb)
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    c = 0.5 * (np.trace(D) - 1.0)
    return float(np.arctan2(s, c))


def world_to_camera(v, pose):
    if v.frame != WORLD:
        raise FrameMismatch(f"expected world-frame vertices, got {v.frame!r}")
    return VertexSet(v.points @ pose.rotation + pose.translation, CAMERA)


def _project_points(P, K):
    z = P[:, 2]
    bad = np.flatnonzero(z <= MIN_DEPTH)
    if bad.size:
        raise BehindCamera(bad[0], float(z[bad[0]]))
    return np.column_stack((K.fx * P[:, 0] / z + K.cx, K.fy * P[:, 1] / z + K.cy))


def perspective_project(v, K):
    """Pinhole projection of camera-frame points; raises BehindCamera for depth <= 1e-9."""
    if v.frame != CAMERA:
        raise FrameMismatch(f"expected camera-frame vertices, got {v.frame!r}")
    return LandmarkSet2D(_project_points(v.points, K))


def project_world(v, pose, K):
    return perspective_project(world_to_camera(v, pose), K)
