"""Mesh and landmark regression losses with analytic (sub)gradients.

All three losses are L1 distances.  Vertex and landmark losses average the
per-point sum of absolute coordinate differences over points; the edge loss
averages absolute edge-length differences over the 3M per-triangle edges.
The subgradient of ``|x|`` at zero is taken as zero.

The ``*_batch`` helpers accept arrays with a leading batch axis and return one
loss per instance; the public functions wrap them for single instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEdge, FrameMismatch, SizeMismatch
from .geometry import LandmarkSet2D, VertexSet

MIN_EDGE = 1e-12


@dataclass(frozen=True)
class LossWeights:
    edge: float = 0.25
    landmark: float = 2.0

    def __post_init__(self):
        if not (self.edge >= 0 and self.landmark >= 0):
            raise ValueError(f"loss weights must be non-negative, got {self}")


@dataclass(frozen=True, eq=False)
class LossReport:
    l_vert: float
    l_edge: float
    l_land: float
    l_total: float
    grad_vertices: np.ndarray
    grad_landmarks: np.ndarray


def _as_array(x, dim):
    a = x.points if isinstance(x, (VertexSet, LandmarkSet2D)) else np.asarray(x, dtype=float)
    if a.shape[-1] != dim:
        raise SizeMismatch(f"expected {dim} coordinates per point, got shape {a.shape}")
    return a


def _check_pair(pred, gt):
    if pred.shape != gt.shape:
        raise SizeMismatch(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")


def l1_point_loss_batch(pred, gt):
    """Mean over points of the per-point L1 norm; works on (..., N, d) arrays."""
    _check_pair(pred, gt)
    diff = pred - gt
    n = diff.shape[-2]
    loss = np.abs(diff).sum(axis=(-2, -1)) / n
    return loss, np.sign(diff) / n


def edge_loss_batch(pred, gt, edges):
    """Edge-length L1 loss on (B, N, 3) arrays; returns (B,) losses and (B, N, 3) grads."""
    _check_pair(pred, gt)
    edges = np.asarray(edges)
    B, N, _ = pred.shape
    if edges.size and edges.max() >= N:
        raise SizeMismatch(f"edge table references vertex {edges.max()} but meshes have {N}")
    a, b = edges[:, 0], edges[:, 1]
    d_pred = pred[:, a] - pred[:, b]
    e_pred = np.linalg.norm(d_pred, axis=-1)
    e_gt = np.linalg.norm(gt[:, a] - gt[:, b], axis=-1)
    small = np.argwhere(e_pred < MIN_EDGE)
    if small.size:
        raise DegenerateEdge(small[0, -1])
    m3 = edges.shape[0]
    diff = e_pred - e_gt
    loss = np.abs(diff).sum(axis=-1) / m3

    g_edge = (np.sign(diff) / (m3 * e_pred))[..., None] * d_pred  # (B, 3M, 3)
    offsets = (np.arange(B) * N)[:, None]
    ia = (a[None, :] + offsets).ravel()
    ib = (b[None, :] + offsets).ravel()
    grad = np.empty((B * N, 3))
    for k in range(3):
        w = g_edge[..., k].ravel()
        grad[:, k] = np.bincount(ia, weights=w, minlength=B * N) - np.bincount(ib, weights=w, minlength=B * N)
    return loss, grad.reshape(B, N, 3)


def edge_lengths_diff(pred, gt, edges):
    """Predicted minus ground-truth length of every edge in the table."""
    p, g = _as_array(pred, 3), _as_array(gt, 3)
    a, b = np.asarray(edges)[:, 0], np.asarray(edges)[:, 1]
    return np.linalg.norm(p[a] - p[b], axis=1) - np.linalg.norm(g[a] - g[b], axis=1)


def vertex_loss(pred, gt):
    """Vertex L1 loss and its (N, 3) subgradient w.r.t. ``pred``."""
    if isinstance(pred, VertexSet) and isinstance(gt, VertexSet) and pred.frame != gt.frame:
        raise FrameMismatch(f"prediction is in {pred.frame!r} frame, ground truth in {gt.frame!r}")
    loss, grad = l1_point_loss_batch(_as_array(pred, 3), _as_array(gt, 3))
    return float(loss), grad


def landmark_loss(pred, gt):
    """Landmark L1 loss (pixels) and its (N, 2) subgradient."""
    loss, grad = l1_point_loss_batch(_as_array(pred, 2), _as_array(gt, 2))
    return float(loss), grad


def edge_loss(pred, gt, edges):
    """Edge-length L1 loss over a per-triangle edge table, with (N, 3) gradient.

    Raises DegenerateEdge when a predicted edge is shorter than 1e-12.
    """
    p, g = _as_array(pred, 3), _as_array(gt, 3)
    loss, grad = edge_loss_batch(p[None], g[None], edges)
    return float(loss[0]), grad[0]


def total_loss(pred_v, gt_v, pred_p, gt_p, edges, weights=LossWeights()):
    lv, gv = vertex_loss(pred_v, gt_v)
    le, ge = edge_loss(pred_v, gt_v, edges)
    ll, gl = landmark_loss(pred_p, gt_p)
    total = lv + weights.edge * le + weights.landmark * ll
    return LossReport(
        l_vert=lv,
        l_edge=le,
        l_land=ll,
        l_total=total,
        grad_vertices=gv + weights.edge * ge,
        grad_landmarks=weights.landmark * gl,
    )
