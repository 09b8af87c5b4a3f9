"""Fixed triangle topology of the face mesh.

Topology files are JSON objects::

    {"n_vertices": N, "triangles": [[i, j, k], ...], "landmark68": [...]}

``landmark68`` may be omitted for meshes that carry no landmark table.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParseError, SizeMismatch, TopologyInvalid
from .geometry import LandmarkSet2D, VertexSet

N_LANDMARKS = 68


@dataclass(frozen=True, eq=False)
class FaceTopology:
    triangles: np.ndarray
    n_vertices: int
    landmark68: np.ndarray = None

    def __post_init__(self):
        n = int(self.n_vertices)
        if n <= 0:
            raise TopologyInvalid("n_vertices must be positive")
        tri = np.asarray(self.triangles)
        if tri.size == 0:
            tri = tri.reshape(0, 3)
        if tri.ndim != 2 or tri.shape[1] != 3:
            raise TopologyInvalid(f"triangles must be an M x 3 array, got shape {tri.shape}")
        if not np.issubdtype(tri.dtype, np.integer):
            if not np.all(np.mod(tri, 1) == 0):
                raise TopologyInvalid("triangle indices must be integers")
        tri = tri.astype(np.int64)
        bad = np.flatnonzero(((tri < 0) | (tri >= n)).any(axis=1))
        if bad.size:
            raise TopologyInvalid(f"triangle index out of range [0, {n})", int(bad[0]))
        degenerate = (tri[:, 0] == tri[:, 1]) | (tri[:, 1] == tri[:, 2]) | (tri[:, 0] == tri[:, 2])
        bad = np.flatnonzero(degenerate)
        if bad.size:
            raise TopologyInvalid("degenerate triangle (repeated vertex)", int(bad[0]))

        lmk = np.zeros(0, dtype=np.int64) if self.landmark68 is None else np.asarray(self.landmark68)
        lmk = lmk.reshape(-1).astype(np.int64)
        if lmk.size not in (0, N_LANDMARKS):
            raise TopologyInvalid(f"landmark table must hold {N_LANDMARKS} indices, got {lmk.size}")
        bad = np.flatnonzero((lmk < 0) | (lmk >= n))
        if bad.size:
            raise TopologyInvalid(f"landmark index out of range [0, {n})", int(bad[0]))
        _, first = np.unique(lmk, return_index=True)
        if first.size != lmk.size:
            dup = sorted(set(range(lmk.size)) - set(first.tolist()))[0]
            raise TopologyInvalid("duplicate landmark index", dup)

        tri.setflags(write=False)
        lmk.setflags(write=False)
        object.__setattr__(self, "triangles", tri)
        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "landmark68", lmk)

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def edges(self):
        """Per-triangle edge table, shape (3M, 2).

        Edge ``3t + k`` joins ``t[k]`` and ``t[(k+1) % 3]``, stored ascending.
        Edges shared by two triangles appear once per triangle.
        """
        t = self.triangles
        pairs = np.stack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=1).reshape(-1, 2)
        pairs = np.sort(pairs, axis=1)
        pairs.setflags(write=False)
        return pairs

    def to_dict(self):
        d = {"n_vertices": self.n_vertices, "triangles": self.triangles.tolist()}
        if self.landmark68.size:
            d["landmark68"] = self.landmark68.tolist()
        return d


def topology_from_dict(d):
    if not isinstance(d, dict) or "triangles" not in d or "n_vertices" not in d:
        raise ParseError("topology must be an object with 'n_vertices' and 'triangles'")
    try:
        tri = np.array(d["triangles"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad triangle list: {exc}") from None
    return FaceTopology(tri, d["n_vertices"], d.get("landmark68"))


def load_topology(path):
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return topology_from_dict(d)


def save_topology(topo, path):
    with open(path, "w") as fh:
        json.dump(topo.to_dict(), fh)


def _points(v):
    return v.points if isinstance(v, (VertexSet, LandmarkSet2D)) else np.asarray(v, dtype=float)


def edge_lengths(v, edges):
    """Euclidean length of every entry of an edge table, in table order."""
    P = _points(v)
    edges = np.asarray(edges)
    if edges.size and edges.max() >= P.shape[0]:
        raise SizeMismatch(f"edge table references vertex {edges.max()} but only {P.shape[0]} given")
    return np.linalg.norm(P[edges[:, 0]] - P[edges[:, 1]], axis=1)


def select_landmarks(v, topo):
    """Gather the 68 landmark rows, keeping the wrapper type of ``v``."""
    if len(v) != topo.n_vertices:
        raise SizeMismatch(f"expected {topo.n_vertices} points, got {len(v)}")
    if topo.landmark68.size == 0:
        raise TopologyInvalid("topology has no landmark table")
    rows = v.points[topo.landmark68]
    if isinstance(v, VertexSet):
        return VertexSet(rows, v.frame)
    return LandmarkSet2D(rows)


def export_obj(v, topo, path):
    P = _points(v)
    if P.shape[0] != topo.n_vertices:
        raise SizeMismatch(f"mesh has {P.shape[0]} vertices, topology expects {topo.n_vertices}")
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}\n" for x, y, z in P]
    lines += [f"f {a} {b} {c}\n" for a, b, c in (topo.triangles + 1).tolist()]
    with open(path, "w") as fh:
        fh.writelines(lines)


def read_obj(path):
    """Minimal OBJ reader: returns (vertices, zero-based triangles)."""
    verts, faces = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(x.split("/")[0]) - 1 for x in parts[1:4]])
    return np.array(verts, dtype=float).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)
