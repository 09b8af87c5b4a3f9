"""Deterministic synthetic face-like data with exact ground truth.

The mesh is an ellipsoidal cap (about 0.16 x 0.22 x 0.10 m) triangulated row
by row.  Rows hold ``n // r`` or ``n // r + 1`` vertices and neighbouring
rows are zipped into triangle strips, which for 1,220 vertices gives exactly
2,304 triangles.  Shape variation comes from a small orthogonal basis of
smooth deformation fields with rigid motions and global scale projected out,
so every basis direction is a genuine change of shape.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, ParseError, RangeInvalid
from .fileio import (
    find_instance_file,
    list_instances,
    load_intrinsics,
    load_landmarks,
    load_pose,
    load_vertices,
    save_intrinsics,
    save_landmarks,
    save_pose,
    save_vertices,
)
from .geometry import CameraIntrinsics, LandmarkSet2D, Pose6DoF, VertexSet, project_world, rotation_from_euler
from .topology import N_LANDMARKS, FaceTopology, load_topology, save_topology

FACE_SIZE = (0.16, 0.22, 0.10)
BASIS_RMS = 0.003  # per-vertex RMS displacement (m) of one unit coefficient
MIN_SAMPLE_DEPTH = 0.05


@dataclass(frozen=True, eq=False)
class ShapeModel:
    template: np.ndarray  # (N, 3)
    basis: np.ndarray  # (B, N, 3)

    @property
    def n_vertices(self):
        return self.template.shape[0]

    @property
    def n_basis(self):
        return self.basis.shape[0]

    def shape(self, coeffs):
        return self.template + np.tensordot(np.asarray(coeffs, dtype=float), self.basis, axes=1)


@dataclass(frozen=True)
class SynthRanges:
    depth: tuple = (0.3, 0.9)
    yaw_deg: float = 90.0
    pitch_deg: float = 45.0
    roll_deg: float = 30.0
    image_size: tuple = (800, 800)
    fx: float = 1000.0
    fy: float = 1000.0
    coeff_sigma: float = 1.0
    coeff_clip: float = 3.0

    def validate(self):
        lo, hi = self.depth
        if not (0.2 <= lo <= hi <= 1.5):
            raise RangeInvalid(f"depth range {self.depth} must lie within [0.2, 1.5] m")
        for name, limit in (("yaw_deg", 90.0), ("pitch_deg", 45.0), ("roll_deg", 30.0)):
            val = getattr(self, name)
            if not (0.0 <= val <= limit):
                raise RangeInvalid(f"{name}={val} outside [0, {limit}]")
        if min(self.image_size) <= 0 or self.fx <= 0 or self.fy <= 0:
            raise RangeInvalid("image size and focal lengths must be positive")
        if self.coeff_sigma < 0 or self.coeff_clip <= 0:
            raise RangeInvalid("coefficient sigma must be >= 0 and clip > 0")

    @property
    def intrinsics(self):
        w, h = self.image_size
        return CameraIntrinsics(self.fx, self.fy, w / 2.0, h / 2.0)


@dataclass(frozen=True, eq=False)
class SyntheticInstance:
    id: str
    v_world: VertexSet
    pose: Pose6DoF
    K: CameraIntrinsics
    landmarks: LandmarkSet2D
    coeffs: np.ndarray = field(default=None)


def _row_lengths(n):
    r = max(3, int(round(np.sqrt(n))))
    base, rem = divmod(n, r)
    # Longer rows go to the middle; ties resolved by row index.
    order = sorted(range(r), key=lambda i: (abs(i - (r - 1) / 2.0), i))
    lengths = [base] * r
    for i in order[:rem]:
        lengths[i] += 1
    return lengths


def _strip(row_a, row_b, ua, ub):
    """Zip two vertex rows into a strip of len(a) + len(b) - 2 triangles."""
    tris = []
    i = j = 0
    while i < len(row_a) - 1 or j < len(row_b) - 1:
        advance_a = j == len(row_b) - 1 or (i < len(row_a) - 1 and ua[i + 1] <= ub[j + 1])
        if advance_a:
            tris.append((row_a[i], row_b[j], row_a[i + 1]))
            i += 1
        else:
            tris.append((row_a[i], row_b[j], row_b[j + 1]))
            j += 1
    return tris


def face_grid(n_vertices):
    """Row-triangulated ellipsoidal cap; returns (points, triangles, (u, v) params)."""
    lengths = _row_lengths(n_vertices)
    r = len(lengths)
    pts, uv, rows, us = [], [], [], []
    a = FACE_SIZE[0] / 2 / np.sin(1.1)
    b = FACE_SIZE[1] / 2 / np.sin(1.0)
    c = FACE_SIZE[2] / (1 - np.cos(1.1) * np.cos(1.0))
    k = 0
    for i, m in enumerate(lengths):
        v = -1.0 + 2.0 * i / (r - 1)
        u = np.linspace(-1.0, 1.0, m)
        width = np.sqrt(1.0 - 0.4 * v * v)
        tu, tv = 1.1 * u * width, 1.0 * v
        pts.append(np.column_stack((a * np.sin(tu) * np.cos(tv), b * np.sin(tv) * np.ones(m),
                                    -c * np.cos(tu) * np.cos(tv))))
        uv.append(np.column_stack((u, np.full(m, v))))
        rows.append(list(range(k, k + m)))
        us.append(u)
        k += m
    tris = []
    for i in range(r - 1):
        tris += _strip(rows[i], rows[i + 1], us[i], us[i + 1])
    P = np.concatenate(pts)
    return P - P.mean(axis=0), np.array(tris, dtype=np.int64), np.concatenate(uv)


def _monomials(uv, degree=3):
    u, v = uv[:, 0], uv[:, 1]
    return np.column_stack([u**i * v**j for i in range(degree + 1) for j in range(degree + 1 - i)])


def make_shape_model(n_vertices=1220, n_basis=8, seed=0):
    """Template mesh, orthogonal deformation basis and topology, deterministic per seed."""
    if n_vertices < 9:
        raise RangeInvalid(f"need at least 9 vertices, got {n_vertices}")
    if n_basis < 0:
        raise RangeInvalid("n_basis must be non-negative")
    template, tris, uv = face_grid(n_vertices)
    n = n_vertices
    rng = np.random.default_rng(seed)
    phi = _monomials(uv)

    # Rigid motions and uniform scale of the template, flattened.
    rigid = [np.tile(e, (n, 1)) for e in np.eye(3)]
    rigid += [np.cross(e, template) for e in np.eye(3)]
    rigid.append(template)
    Qr, _ = np.linalg.qr(np.stack([x.ravel() for x in rigid], axis=1))

    max_basis = 3 * phi.shape[1] - Qr.shape[1]
    if n_basis > max_basis:
        raise RangeInvalid(f"at most {max_basis} basis directions available")
    fields = np.zeros((3 * n, n_basis))
    for k in range(n_basis):
        fields[:, k] = (phi @ rng.normal(size=(phi.shape[1], 3))).ravel()
    fields -= Qr @ (Qr.T @ fields)
    fields -= Qr @ (Qr.T @ fields)
    Q, _ = np.linalg.qr(fields) if n_basis else (np.zeros((3 * n, 0)), None)
    basis = (Q.T * (BASIS_RMS * np.sqrt(n))).reshape(n_basis, n, 3)

    lmk = np.linspace(0, n - 1, N_LANDMARKS).round().astype(np.int64) if n >= N_LANDMARKS else None
    topo = FaceTopology(tris, n, lmk)
    for arr in (template, basis):
        arr.setflags(write=False)
    return ShapeModel(template, basis), topo


def sample_instance(model, ranges=SynthRanges(), seed=0, instance_id="0", rng=None):
    """Random shape, pose and exact projections for one instance."""
    ranges.validate()
    rng = np.random.default_rng(seed) if rng is None else rng
    K = ranges.intrinsics
    w, h = ranges.image_size
    sigma = ranges.coeff_sigma
    while True:
        coeffs = np.clip(rng.normal(0.0, 1.0, model.n_basis) * sigma,
                         -ranges.coeff_clip * sigma, ranges.coeff_clip * sigma)
        V = model.shape(coeffs)
        yaw, pitch, roll = np.deg2rad(rng.uniform(-1.0, 1.0, 3) * [ranges.yaw_deg, ranges.pitch_deg, ranges.roll_deg])
        R = rotation_from_euler(yaw, pitch, roll)
        tz = rng.uniform(*ranges.depth)
        u0 = rng.uniform(w / 4.0, 3.0 * w / 4.0)
        v0 = rng.uniform(h / 4.0, 3.0 * h / 4.0)
        # Place the rotated centroid so that it projects to (u0, v0) at depth tz.
        c = V.mean(axis=0) @ R
        zc = c[2] + tz
        tx = (u0 - K.cx) / K.fx * zc - c[0]
        ty = (v0 - K.cy) / K.fy * zc - c[1]
        T = np.array([tx, ty, tz])
        if (V @ R + T)[:, 2].min() > MIN_SAMPLE_DEPTH:
            break
    v = VertexSet(V)
    pose = Pose6DoF(R, T)
    return SyntheticInstance(instance_id, v, pose, K, project_world(v, pose, K), coeffs)


def instance_seed(seed, index):
    return np.random.SeedSequence([int(seed), int(index)])


def generate_instances(model, n, seed=0, ranges=SynthRanges()):
    ranges.validate()
    return [
        sample_instance(model, ranges, rng=np.random.default_rng(instance_seed(seed, i)), instance_id=f"{i:05d}")
        for i in range(n)
    ]


def add_landmark_noise(landmarks, sigma_px, seed=0):
    """Landmarks plus i.i.d. Gaussian pixel noise; ``seed`` may be an int or a Generator."""
    if sigma_px < 0:
        raise RangeInvalid("noise sigma must be non-negative")
    p = landmarks.landmarks if isinstance(landmarks, SyntheticInstance) else landmarks
    pts = p.points if hasattr(p, "points") else np.asarray(p, dtype=float)
    if sigma_px == 0:
        return LandmarkSet2D(pts)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return LandmarkSet2D(pts + rng.normal(0.0, sigma_px, pts.shape))


def write_dataset(instances, directory, topology=None, config=None, fmt="json"):
    """Write four files per instance plus ``manifest.json`` (and ``topology.json`` if given)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for inst in instances:
        save_vertices(inst.v_world, d / f"{inst.id}.vertices.{fmt}")
        save_pose(inst.pose, d / f"{inst.id}.pose.json")
        save_intrinsics(inst.K, d / f"{inst.id}.intrinsics.json")
        save_landmarks(inst.landmarks, d / f"{inst.id}.landmarks.{fmt}")
    if topology is not None:
        save_topology(topology, d / "topology.json")
    manifest = {"ids": [inst.id for inst in instances], "config": config or {}}
    with open(d / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def ranges_to_dict(ranges):
    d = asdict(ranges)
    d["depth"] = list(ranges.depth)
    d["image_size"] = list(ranges.image_size)
    return d


def load_dataset(directory):
    """Load every instance of a dataset directory; returns (instances, topology or None)."""
    d = Path(directory)
    if not d.is_dir():
        raise ParseError(f"{d}: not a directory")
    ids = list_instances(d)
    if not ids:
        raise EmptyDataset(f"{d}: no instances found")
    out = []
    for iid in ids:
        paths = {k: find_instance_file(d, iid, k) for k in ("vertices", "pose", "intrinsics", "landmarks")}
        missing = [k for k, p in paths.items() if p is None]
        if missing:
            raise ParseError(f"{d}: instance {iid!r} lacks {', '.join(missing)} file(s)")
        out.append(SyntheticInstance(
            iid,
            load_vertices(paths["vertices"]),
            load_pose(paths["pose"]),
            load_intrinsics(paths["intrinsics"]),
            load_landmarks(paths["landmarks"]),
        ))
    topo_path = d / "topology.json"
    topo = load_topology(topo_path) if topo_path.exists() else None
    return out, topo
