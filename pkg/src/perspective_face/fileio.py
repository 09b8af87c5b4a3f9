"""Readers and writers for the on-disk formats.

Pose:       {"R": [[...], [...], [...]], "T": [tx, ty, tz]}     (meters)
Intrinsics: {"fx": ..., "fy": ..., "cx": ..., "cy": ...}         (pixels)
Vertices:   JSON array of [x, y, z] or headerless 3-column CSV    (meters)
Landmarks:  JSON array of [u, v]    or headerless 2-column CSV    (pixels)

Data files are written with shortest round-trip float formatting so a
write/read cycle is exact.  Human-facing numbers (reports, console) use
:func:`fmt`, nine significant digits.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import NotARotation, ParseError
from .geometry import WORLD, CameraIntrinsics, LandmarkSet2D, Pose6DoF, VertexSet


def fmt(x):
    """Nine-significant-digit decimal used for reports and console output."""
    s = f"{float(x):.9g}"
    return "0" if s == "-0" else s


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_pose(path):
    d = _read_json(path)
    try:
        R = np.array(d["R"], dtype=float)
        T = np.array(d["T"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad pose ({exc})") from None
    try:
        return Pose6DoF(R, T)
    except (NotARotation, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_pose(pose, path):
    _write_json({"R": pose.rotation.tolist(), "T": pose.translation.tolist()}, path)


def load_intrinsics(path):
    d = _read_json(path)
    try:
        return CameraIntrinsics(d["fx"], d["fy"], d["cx"], d["cy"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: bad intrinsics ({exc})") from None


def save_intrinsics(K, path):
    _write_json({"fx": K.fx, "fy": K.fy, "cx": K.cx, "cy": K.cy}, path)


def _load_points(path, dim):
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            arr = np.array(_read_json(path), dtype=float)
        elif suffix == ".csv":
            arr = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
        else:
            raise ParseError(f"{path}: unsupported extension {suffix!r} (use .json or .csv)")
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ParseError(f"{path}: expected rows of {dim} numbers, got shape {arr.shape}")
    return arr


def _save_points(points, path):
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".json":
        _write_json(np.asarray(points, dtype=float).tolist(), path)
    elif suffix == ".csv":
        with open(path, "w") as fh:
            for row in np.asarray(points, dtype=float):
                fh.write(",".join(repr(float(x)) for x in row) + "\n")
    else:
        raise ParseError(f"{path}: unsupported extension {suffix!r} (use .json or .csv)")


def load_vertices(path, frame=WORLD):
    try:
        return VertexSet(_load_points(path, 3), frame)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_vertices(v, path):
    _save_points(v.points, path)


def load_landmarks(path):
    try:
        return LandmarkSet2D(_load_points(path, 2))
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def save_landmarks(p, path):
    _save_points(p.points, path)


def find_instance_file(directory, instance_id, kind):
    """Path of ``<id>.<kind>.json`` or ``<id>.<kind>.csv`` in ``directory``, or None."""
    for ext in (".json", ".csv"):
        p = Path(directory) / f"{instance_id}.{kind}{ext}"
        if p.exists():
            return p
    return None


def list_instances(directory):
    """Sorted instance ids, taken from ``<id>.vertices.(json|csv)`` file names."""
    ids = set()
    for p in Path(directory).iterdir():
        for ext in (".vertices.json", ".vertices.csv"):
            if p.name.endswith(ext):
                ids.add(p.name[: -len(ext)])
    return sorted(ids)
