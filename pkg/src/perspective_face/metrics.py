"""Camera-space reconstruction error for predicted meshes and poses.

Ground-truth and predicted vertices are each combined with ground-truth and
predicted poses, giving four camera-space vertex sets::

    V1 = Vgt @ Rgt + Tgt        V2 = Vpred @ Rpred + Tpred
    V3 = Vgt @ Rpred + Tpred    V4 = Vpred @ Rgt + Tgt

The error of an instance is ``1000 * (d(V1,V2) + d(V1,V3) + 10 * d(V1,V4))``
millimeters, where ``d`` is :func:`set_distance`.  V4 isolates shape error,
V3 isolates pose error, and the factor 10 weights shape accuracy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingInstance, SizeMismatch
from .fileio import find_instance_file, fmt, list_instances, load_pose, load_vertices

SHAPE_WEIGHT = 10.0
MM_PER_M = 1000.0


@dataclass(frozen=True)
class InstanceError:
    d12: float
    d13: float
    d14: float
    l_error_mm: float


@dataclass
class ScoreReport:
    ids: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    @property
    def mean_l_error_mm(self):
        return float(np.mean([e.l_error_mm for e in self.errors])) if self.errors else 0.0

    def column_means_mm(self):
        """Mean of d12, d13 and 10*d14 in millimeters."""
        if not self.errors:
            return 0.0, 0.0, 0.0
        a = np.array([[e.d12, e.d13, SHAPE_WEIGHT * e.d14] for e in self.errors]) * MM_PER_M
        return tuple(float(x) for x in a.mean(axis=0))


def set_distance(A, B):
    """Mean per-vertex Euclidean distance between two N x 3 point sets."""
    return float(np.linalg.norm(A - B, axis=1).mean())


def _pts(v):
    return v.points if hasattr(v, "points") else np.asarray(v, dtype=float)


def transformed_sets(v_gt, v_pred, pose_gt, pose_pred):
    Vg, Vp = _pts(v_gt), _pts(v_pred)
    if Vg.shape != Vp.shape:
        raise SizeMismatch(f"ground truth has shape {Vg.shape}, prediction {Vp.shape}")
    Rg, Tg = pose_gt.rotation, pose_gt.translation
    Rp, Tp = pose_pred.rotation, pose_pred.translation
    return Vg @ Rg + Tg, Vp @ Rp + Tp, Vg @ Rp + Tp, Vp @ Rg + Tg


def instance_error(v_gt, v_pred, pose_gt, pose_pred):
    V1, V2, V3, V4 = transformed_sets(v_gt, v_pred, pose_gt, pose_pred)
    d12, d13, d14 = set_distance(V1, V2), set_distance(V1, V3), set_distance(V1, V4)
    return InstanceError(d12, d13, d14, MM_PER_M * (d12 + d13 + SHAPE_WEIGHT * d14))


def score_submission(gt, pred):
    """Score predictions against ground truth.

    Both arguments map instance id to ``(vertices, pose)``.  Instances are
    reported in sorted id order; predictions without ground truth are ignored.
    """
    report = ScoreReport()
    for iid in sorted(gt):
        if iid not in pred:
            raise MissingInstance(iid)
        v_gt, pose_gt = gt[iid]
        v_pred, pose_pred = pred[iid]
        if len(v_gt) != len(v_pred):
            raise SizeMismatch(f"instance {iid!r}: {len(v_pred)} predicted vertices, expected {len(v_gt)}")
        report.ids.append(iid)
        report.errors.append(instance_error(v_gt, v_pred, pose_gt, pose_pred))
    return report


def load_submission(directory, ids=None):
    """Read ``<id>.vertices.(json|csv)`` and ``<id>.pose.json`` pairs from a directory."""
    ids = list_instances(directory) if ids is None else ids
    out = {}
    for iid in ids:
        vpath = find_instance_file(directory, iid, "vertices")
        ppath = find_instance_file(directory, iid, "pose")
        if vpath is None or ppath is None:
            continue
        out[iid] = (load_vertices(vpath), load_pose(ppath))
    return out


REPORT_COLUMNS = ["id", "d12_mm", "d13_mm", "10*d14_mm", "l_error_mm"]


def write_report(report, path):
    """CSV with one row per instance and a final ``mean`` row."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for iid, e in zip(report.ids, report.errors):
            w.writerow([iid, fmt(MM_PER_M * e.d12), fmt(MM_PER_M * e.d13),
                        fmt(SHAPE_WEIGHT * MM_PER_M * e.d14), fmt(e.l_error_mm)])
        m12, m13, m14 = report.column_means_mm()
        w.writerow(["mean", fmt(m12), fmt(m13), fmt(m14), fmt(report.mean_l_error_mm)])
