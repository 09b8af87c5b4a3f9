"""Perspective-n-Point: 6DoF pose from 3D world points and their 2D projections.

A linear DLT estimate initializes a Levenberg-Marquardt refinement of the
reprojection error.  The LM state is the rotation matrix plus translation;
each step solves for a small axis-angle increment ``d`` and applies
``R <- R @ rotation_from_axis_angle(d)``, so the chart is always centered at
the current estimate and never approaches the angle-pi singularity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, DegenerateConfiguration, SizeMismatch, TooFewPoints
from .geometry import MIN_DEPTH, Pose6DoF, rotation_from_axis_angle

MIN_POINTS = 6
DLT_CONDITION = 1e-10


@dataclass(frozen=True)
class PnPConfig:
    max_iterations: int = 100
    cost_tolerance: float = 1e-12
    step_tolerance: float = 1e-12
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1

    def __post_init__(self):
        if self.max_iterations <= 0 or self.cost_tolerance <= 0 or self.step_tolerance <= 0:
            raise ValueError("iteration count and tolerances must be positive")
        if self.initial_damping <= 0:
            raise ValueError("initial damping must be positive")
        if not (self.damping_up > 1.0 > self.damping_down > 0.0):
            raise ValueError("need damping_up > 1 > damping_down > 0")


@dataclass(frozen=True)
class PnPResult:
    pose: Pose6DoF
    rms_reprojection_error: float
    iterations: int
    converged: bool
    initial_cost: float = float("nan")
    final_cost: float = float("nan")


def _inputs(v, p, K):
    X = v.points if hasattr(v, "points") else np.asarray(v, dtype=float)
    x = p.points if hasattr(p, "points") else np.asarray(p, dtype=float)
    if X.ndim != 2 or X.shape[1] != 3 or x.ndim != 2 or x.shape[1] != 2:
        raise SizeMismatch(f"expected N x 3 world points and N x 2 pixels, got {X.shape} and {x.shape}")
    if X.shape[0] != x.shape[0]:
        raise SizeMismatch(f"{X.shape[0]} world points but {x.shape[0]} pixels")
    if X.shape[0] < MIN_POINTS:
        raise TooFewPoints(f"PnP needs at least {MIN_POINTS} points, got {X.shape[0]}")
    return X, x


def _nearest_rotation(M):
    U, S, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    D = np.diag([1.0, 1.0, d])
    return U @ D @ Vt, float((S * np.diag(D)).sum() / 3.0)


def solve_pnp_dlt(v, p, K):
    """Linear pose estimate from >= 6 non-coplanar correspondences."""
    X, x = _inputs(v, p, K)
    n = X.shape[0]
    xn = (x[:, 0] - K.cx) / K.fx
    yn = (x[:, 1] - K.cy) / K.fy

    # Center and scale the 3D points so the homogeneous system is well conditioned.
    c = X.mean(axis=0)
    s = np.sqrt(((X - c) ** 2).sum(axis=1).mean() / 3.0)
    if s == 0:
        raise DegenerateConfiguration("all world points coincide")
    Xh = np.column_stack(((X - c) / s, np.ones(n)))

    A = np.zeros((2 * n, 12))
    A[0::2, 0:4] = Xh
    A[0::2, 8:12] = -xn[:, None] * Xh
    A[1::2, 4:8] = Xh
    A[1::2, 8:12] = -yn[:, None] * Xh
    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    # The solution is the smallest singular direction; a second near-null
    # direction means the solution is not unique (e.g. coplanar points).
    if sv[-2] / sv[0] < DLT_CONDITION:
        raise DegenerateConfiguration(f"DLT system is rank deficient (sigma_11/sigma_1 = {sv[-2] / sv[0]:.3g})")

    Pn = Vt[-1].reshape(3, 4)
    N = np.eye(4)
    N[:3, :3] /= s
    N[:3, 3] = -c / s
    P = Pn @ N
    depths = np.column_stack((X, np.ones(n))) @ P[2]
    if np.median(depths) < 0:
        P = -P

    # P = alpha * [R^T | T] for the row-convention pose (R, T).
    Rt, alpha = _nearest_rotation(P[:, :3])
    return Pose6DoF(Rt.T, P[:, 3] / alpha)


def residuals(X, x, R, T, K):
    """Stacked reprojection residuals (u0, v0, u1, v1, ...) and camera-frame points."""
    P = X @ R + T
    z = P[:, 2]
    bad = np.flatnonzero(z <= MIN_DEPTH)
    if bad.size:
        raise BehindCamera(bad[0], float(z[bad[0]]))
    u = K.fx * P[:, 0] / z + K.cx
    w = K.fy * P[:, 1] / z + K.cy
    return np.column_stack((u - x[:, 0], w - x[:, 1])).ravel(), P


def jacobian(X, R, T, K):
    """Jacobian of the residuals w.r.t. (axis-angle increment, translation), shape (2N, 6).

    The increment ``d`` acts as ``R @ rotation_from_axis_angle(d)`` and the
    Jacobian is evaluated at ``d = 0``.
    """
    Y = X @ R
    P = Y + T
    z = P[:, 2]
    n = X.shape[0]
    dproj = np.zeros((n, 2, 3))
    dproj[:, 0, 0] = K.fx / z
    dproj[:, 0, 2] = -K.fx * P[:, 0] / z**2
    dproj[:, 1, 1] = K.fy / z
    dproj[:, 1, 2] = -K.fy * P[:, 1] / z**2
    # d(camera point)/d(increment) = -[y]_x for the rotated world point y.
    dY = np.zeros((n, 3, 3))
    dY[:, 0, 1], dY[:, 0, 2] = Y[:, 2], -Y[:, 1]
    dY[:, 1, 0], dY[:, 1, 2] = -Y[:, 2], Y[:, 0]
    dY[:, 2, 0], dY[:, 2, 1] = Y[:, 1], -Y[:, 0]
    J = np.concatenate((dproj @ dY, dproj), axis=2)
    return J.reshape(2 * n, 6)


def solve_pnp(v, p, K, cfg=None, init=None):
    """Refine a pose by Levenberg-Marquardt on the summed squared reprojection error.

    Starts from ``init`` when given, otherwise from :func:`solve_pnp_dlt`.
    Trial steps that put a point at depth <= 1e-9 are rejected like any
    cost-increasing step, so the returned cost never exceeds the initial one.
    """
    cfg = cfg or PnPConfig()
    X, x = _inputs(v, p, K)
    pose = init if init is not None else solve_pnp_dlt(v, p, K)
    R, T = np.array(pose.rotation), np.array(pose.translation)

    r, _ = residuals(X, x, R, T, K)
    cost = float(r @ r)
    initial_cost = cost
    lam = cfg.initial_damping
    converged = cost == 0.0
    it = 0
    while not converged and it < cfg.max_iterations:
        it += 1
        J = jacobian(X, R, T, K)
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-12 * max(np.diag(A).max(), 1e-300))
        try:
            step = np.linalg.solve(A + lam * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            lam *= cfg.damping_up
            continue

        R_new = R @ rotation_from_axis_angle(step[:3])
        T_new = T + step[3:]
        small_step = np.linalg.norm(step) <= cfg.step_tolerance * (np.linalg.norm(T) + cfg.step_tolerance)
        try:
            r_new, _ = residuals(X, x, R_new, T_new, K)
            cost_new = float(r_new @ r_new)
        except BehindCamera:
            cost_new = np.inf

        if cost_new < cost:
            decrease = cost - cost_new
            R, T, r, cost = R_new, T_new, r_new, cost_new
            lam *= cfg.damping_down
            if decrease <= cfg.cost_tolerance * (cost + decrease) or cost == 0.0:
                converged = True
        else:
            lam *= cfg.damping_up
        if small_step:
            converged = True

    # Products of many increments drift off SO(3) by rounding only; snap back
    # when that drift becomes visible.
    if np.abs(R.T @ R - np.eye(3)).max() > 1e-12:
        R, _ = _nearest_rotation(R)
        r, _ = residuals(X, x, R, T, K)
        cost = float(r @ r)
    rms = float(np.sqrt(cost / X.shape[0]))
    return PnPResult(Pose6DoF(R, T), rms, it, converged, initial_cost, cost)


def reprojection_rms(v, pose, K, p):
    """Root mean squared 2D reprojection distance in pixels."""
    X, x = _inputs_any(v, p)
    r, _ = residuals(X, x, pose.rotation, pose.translation, K)
    return float(np.sqrt((r @ r) / X.shape[0]))


def _inputs_any(v, p):
    X = v.points if hasattr(v, "points") else np.asarray(v, dtype=float)
    x = p.points if hasattr(p, "points") else np.asarray(p, dtype=float)
    if X.shape[0] != x.shape[0]:
        raise SizeMismatch(f"{X.shape[0]} world points but {x.shape[0]} pixels")
    return X, x
