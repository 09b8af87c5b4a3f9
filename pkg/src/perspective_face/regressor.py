"""Joint mesh + landmark regressor with pose recovered afterwards by PnP.

A one-hidden-layer perceptron maps sparse, noisy 2D observations of a face
to two outputs: all N vertices in world space and all N projected landmarks
in pixels.  Pose is never regressed; :func:`predict_with_pose` recovers it
from the two outputs with :func:`perspective_face.pnp.solve_pnp`.

Inputs are the 2D positions of S fixed vertices expressed in a square crop
around them (center and half-size taken from their bounding box), the
analogue of a normalized face crop.  The landmark head predicts in the same
crop units and is mapped back to pixels by the inverse crop.  Training
minimizes the joint mesh/landmark loss with vertices in units of
``vertex_scale`` (meters by default) and landmarks in crop units, so the
weights 0.25 and 2 balance terms of comparable size.  Backpropagation is
written out by hand.

Model files hold an ASCII magic line, an 8-byte little-endian header length,
a JSON header and a little-endian float64 parameter block in the order
W1, b1, W2v, b2v, W2p, b2p.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyDataset, NonFiniteLoss, ParseError, SizeMismatch
from .geometry import LandmarkSet2D, VertexSet, project_world
from .losses import LossWeights, edge_loss_batch, l1_point_loss_batch
from .pnp import solve_pnp, solve_pnp_dlt

log = logging.getLogger(__name__)

MAGIC = b"PFREG1\n"
PARAM_ORDER = ("W1", "b1", "W2v", "b2v", "W2p", "b2p")
CROP_MARGIN = 1.25


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    lr: float = 0.1
    batch_size: int = 64
    warmup_steps: int = 1000
    warmup_fraction: float = 0.1
    power: float = 1.0
    momentum: float = 0.9
    seed: int = 7
    sigma_px: float = 1.0
    n_features: int = 64
    hidden: int = 256
    edge_weight: float = 0.25
    landmark_weight: float = 2.0
    vertex_unit: float = 1.0  # meters per vertex-head unit; 0 = std of training shapes

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.n_features <= 0 or self.hidden <= 0:
            raise ValueError("epochs, batch size, feature count and hidden width must be positive")
        if self.lr < 0 or self.warmup_steps < 0 or self.power <= 0 or not (0 <= self.momentum < 1):
            raise ValueError("invalid learning-rate schedule")
        if self.sigma_px < 0:
            raise ValueError("sigma_px must be non-negative")

    @property
    def weights(self):
        return LossWeights(self.edge_weight, self.landmark_weight)

    def warmup_for(self, total_steps):
        """Warmup length actually used: capped at ``warmup_fraction`` of the run."""
        return min(self.warmup_steps, int(self.warmup_fraction * total_steps))

    def learning_rate(self, step, total_steps):
        warm = self.warmup_for(total_steps)
        if step < warm:
            return self.lr * (step + 1) / warm
        progress = (step - warm) / max(total_steps - warm, 1)
        return self.lr * (1.0 - progress) ** self.power

    def digest(self):
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(eq=False)
class RegressorModel:
    W1: np.ndarray
    b1: np.ndarray
    W2v: np.ndarray
    b2v: np.ndarray
    W2p: np.ndarray
    b2p: np.ndarray
    feature_indices: np.ndarray
    vertex_mean: np.ndarray  # (N, 3) meters
    vertex_scale: float  # meters per normalized unit
    crop_margin: float = CROP_MARGIN
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.vertex_mean.shape[0]
        h, d = self.W1.shape
        shapes = {"b1": (h,), "W2v": (3 * n, h), "b2v": (3 * n,), "W2p": (2 * n, h), "b2p": (2 * n,)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise SizeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if d != 2 * len(self.feature_indices):
            raise SizeMismatch(f"input dimension {d} != 2 x {len(self.feature_indices)} features")

    @property
    def n_vertices(self):
        return self.vertex_mean.shape[0]

    @property
    def input_dim(self):
        return self.W1.shape[1]

    def params(self):
        return [getattr(self, k) for k in PARAM_ORDER]

    def copy(self):
        return RegressorModel(*(np.array(p) for p in self.params()), self.feature_indices.copy(),
                              self.vertex_mean.copy(), self.vertex_scale, self.crop_margin, dict(self.meta))


def feature_indices(n_vertices, n_features):
    """Evenly spread subset of vertex indices used as input observations."""
    if n_features > n_vertices:
        raise SizeMismatch(f"cannot pick {n_features} features from {n_vertices} vertices")
    return np.linspace(0, n_vertices - 1, n_features).round().astype(np.int64)


def init_model(vertex_mean, vertex_scale, n_features=64, hidden=256, seed=7):
    """Random input layer, zero output heads: the untrained model predicts the mean shape
    and the crop center."""
    vertex_mean = np.asarray(vertex_mean, dtype=float)
    n = vertex_mean.shape[0]
    idx = feature_indices(n, n_features)
    d = 2 * len(idx)
    rng = np.random.default_rng(seed)
    return RegressorModel(
        W1=rng.normal(0.0, 1.0 / np.sqrt(d), (hidden, d)),
        b1=np.zeros(hidden),
        W2v=np.zeros((3 * n, hidden)),
        b2v=np.zeros(3 * n),
        W2p=np.zeros((2 * n, hidden)),
        b2p=np.zeros(2 * n),
        feature_indices=idx,
        vertex_mean=vertex_mean,
        vertex_scale=float(vertex_scale),
        meta={"seed": int(seed)},
    )


@dataclass(frozen=True, eq=False)
class Observation:
    """Network input: crop-normalized feature points and the crop that maps them back.

    Arrays may carry a leading batch axis: features (B, D), center (B, 2), half (B,).
    """

    features: np.ndarray
    center: np.ndarray
    half: np.ndarray

    def to_pixels(self, normalized):
        """Map crop-unit points (..., K, 2) back to pixels."""
        return self.center[..., None, :] + self.half[..., None, None] * normalized

    def __getitem__(self, idx):
        return Observation(self.features[idx], self.center[idx], self.half[idx])


def crop_points(points, margin=CROP_MARGIN):
    """Square crop around (..., S, 2) points: (normalized points, center, half-size)."""
    lo, hi = points.min(axis=-2), points.max(axis=-2)
    center = 0.5 * (lo + hi)
    half = 0.5 * margin * (hi - lo).max(axis=-1)
    if np.any(half <= 0):
        raise ValueError("feature points collapse to a single pixel")
    return (points - center[..., None, :]) / half[..., None, None], center, half


def encode_features(model, landmarks):
    """Observation of the model's feature vertices from (N, 2) or (B, N, 2) pixel landmarks."""
    p = landmarks.points if hasattr(landmarks, "points") else np.asarray(landmarks, dtype=float)
    if p.shape[-2] != model.n_vertices:
        raise SizeMismatch(f"expected {model.n_vertices} landmarks, got {p.shape[-2]}")
    return observe(model, p[..., model.feature_indices, :])


def observe(model, feature_points):
    """Observation from the (..., S, 2) pixel positions of the feature vertices alone."""
    pts = np.asarray(feature_points, dtype=float)
    if pts.shape[-2] != len(model.feature_indices):
        raise SizeMismatch(f"expected {len(model.feature_indices)} feature points, got {pts.shape[-2]}")
    norm, center, half = crop_points(pts, model.crop_margin)
    return Observation(norm.reshape(*pts.shape[:-2], -1), center, half)


def _forward(model, X):
    hidden = np.tanh(X @ model.W1.T + model.b1)
    out_v = hidden @ model.W2v.T + model.b2v
    out_p = hidden @ model.W2p.T + model.b2p
    return hidden, out_v, out_p


def _batched(model, obs):
    X = np.asarray(obs.features, dtype=float)
    single = X.ndim == 1
    if single:
        obs = Observation(X[None], np.asarray(obs.center, float)[None], np.atleast_1d(obs.half).astype(float))
    if obs.features.shape[-1] != model.input_dim:
        raise SizeMismatch(f"expected {model.input_dim} features, got {obs.features.shape[-1]}")
    return obs, single


def forward_batch(model, obs):
    """Batched forward pass: returns (B, N, 3) meters and (B, N, 2) pixels."""
    obs, _ = _batched(model, obs)
    _, out_v, out_p = _forward(model, obs.features)
    n = model.n_vertices
    verts = model.vertex_mean + model.vertex_scale * out_v.reshape(-1, n, 3)
    lmks = obs.to_pixels(out_p.reshape(-1, n, 2))
    return verts, lmks


def forward(model, obs):
    verts, lmks = forward_batch(model, obs)
    return VertexSet(verts[0]), LandmarkSet2D(lmks[0])


def feature_jacobian(model, features):
    """Jacobian of the raw head outputs (vertex head then landmark head) w.r.t. one feature vector.

    Multiply the vertex rows by ``vertex_scale`` and the landmark rows by the
    crop half-size to get meters and pixels per feature unit.
    """
    x = np.asarray(features, dtype=float)
    hidden = np.tanh(model.W1 @ x + model.b1)
    inner = (1.0 - hidden**2)[:, None] * model.W1
    return np.vstack([model.W2v @ inner, model.W2p @ inner])


def loss_and_grads(model, obs, gt_v, gt_p, edges, weights=LossWeights()):
    """Mean joint loss over a batch (normalized units) and its gradient for every parameter.

    Returns ``(loss, parts, grads)`` where ``parts`` holds the batch-mean
    vertex, edge and landmark losses and ``grads`` follows PARAM_ORDER.
    """
    obs, _ = _batched(model, obs)
    X = obs.features
    B = X.shape[0]
    n = model.n_vertices
    hidden, out_v, out_p = _forward(model, X)
    s = model.vertex_scale
    # Vertices in units of vertex_scale: an isotropic scaling, so edge lengths
    # scale uniformly and the edge loss keeps its meaning.
    pv = model.vertex_mean / s + out_v.reshape(B, n, 3)
    gv = np.asarray(gt_v, dtype=float) / s
    # Landmarks in crop units.
    pp = out_p.reshape(B, n, 2)
    gp = (np.asarray(gt_p, dtype=float) - obs.center[:, None, :]) / obs.half[:, None, None]

    lv, dv = l1_point_loss_batch(pv, gv)
    le, de = edge_loss_batch(pv, gv, edges)
    ll, dl = l1_point_loss_batch(pp, gp)
    total = lv + weights.edge * le + weights.landmark * ll

    g_out_v = ((dv + weights.edge * de) / B).reshape(B, 3 * n)
    g_out_p = (weights.landmark * dl / B).reshape(B, 2 * n)
    g_hidden = g_out_v @ model.W2v + g_out_p @ model.W2p
    g_pre = g_hidden * (1.0 - hidden**2)
    grads = [
        g_pre.T @ X,
        g_pre.sum(axis=0),
        g_out_v.T @ hidden,
        g_out_v.sum(axis=0),
        g_out_p.T @ hidden,
        g_out_p.sum(axis=0),
    ]
    parts = (float(lv.mean()), float(le.mean()), float(ll.mean()))
    return float(total.mean()), parts, grads


@dataclass
class TrainingData:
    """Arrays prepared from a list of dataset instances."""

    clean_landmarks: np.ndarray  # (B, N, 2) exact projections
    observed_landmarks: np.ndarray  # (B, N, 2) as stored on disk
    vertices: np.ndarray  # (B, N, 3)

    @classmethod
    def from_instances(cls, instances):
        if not instances:
            raise EmptyDataset("training set is empty")
        n = len(instances[0].v_world)
        if any(len(inst.v_world) != n or len(inst.landmarks) != n for inst in instances):
            raise SizeMismatch("instances disagree on the number of vertices")
        clean = np.stack([project_world(i.v_world, i.pose, i.K).points for i in instances])
        observed = np.stack([i.landmarks.points for i in instances])
        verts = np.stack([i.v_world.points for i in instances])
        return cls(clean, observed, verts)

    def __len__(self):
        return self.vertices.shape[0]


def train(instances, edges, cfg=TrainConfig(), model=None):
    """Mini-batch SGD with momentum, linear warmup and polynomial decay.

    Fresh pixel noise (``cfg.sigma_px``) is drawn for the input features each
    epoch.  Returns ``(model, curve)`` where ``curve`` is the mean training
    loss of every epoch.
    """
    data = instances if isinstance(instances, TrainingData) else TrainingData.from_instances(instances)
    if len(data) == 0:
        raise EmptyDataset("training set is empty")
    m = len(data)
    if model is None:
        mean = data.vertices.mean(axis=0)
        scale = cfg.vertex_unit or float(np.sqrt(((data.vertices - mean) ** 2).mean()))
        model = init_model(mean, scale if scale > 0 else 1.0,
                           min(cfg.n_features, data.vertices.shape[1]), cfg.hidden, cfg.seed)
    else:
        model = model.copy()
    model.meta.update({"seed": int(cfg.seed), "config": asdict(cfg), "config_hash": cfg.digest()})

    rng = np.random.default_rng(cfg.seed)
    steps_per_epoch = -(-m // cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    params = model.params()
    velocity = [np.zeros_like(p) for p in params]
    weights = cfg.weights
    feats = data.observed_landmarks[:, model.feature_indices]
    curve = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(m)
        noise = rng.normal(0.0, 1.0, feats.shape) * cfg.sigma_px
        epoch_loss = 0.0
        for start in range(0, m, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            obs = observe(model, feats[idx] + noise[idx])
            loss, _, grads = loss_and_grads(model, obs, data.vertices[idx], data.clean_landmarks[idx], edges, weights)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NonFiniteLoss(step, f"epoch {epoch + 1}, loss={loss}")
            lr = cfg.learning_rate(step, total_steps)
            for p, v, g in zip(params, velocity, grads):
                v *= cfg.momentum
                v -= lr * g
                p += v
            epoch_loss += loss * len(idx)
            step += 1
        curve.append(epoch_loss / m)
        log.info("epoch %d/%d loss %.6g", epoch + 1, cfg.epochs, curve[-1])
    model.meta["curve"] = list(curve)
    return model, curve


def predict_with_pose(model, obs, K, cfg=None):
    """Forward pass, then PnP on the predicted vertices and landmarks."""
    verts, lmks = forward(model, obs)
    result = solve_pnp(verts, lmks, K, cfg)
    return verts, lmks, result


def predict_template_baseline(model, obs, K):
    """Mean training shape, posed by DLT from the observed feature points alone."""
    obs, _ = _batched(model, obs)
    pixels = obs.to_pixels(obs.features.reshape(1, -1, 2))[0]
    template = model.vertex_mean
    pose = solve_pnp_dlt(template[model.feature_indices], pixels, K)
    return VertexSet(template), pose


def save_model(model, path):
    header = {
        "format": "perspective-face-regressor",
        "version": 1,
        "n_vertices": model.n_vertices,
        "input_dim": model.input_dim,
        "hidden": model.W1.shape[0],
        "feature_indices": model.feature_indices.tolist(),
        "vertex_mean": model.vertex_mean.tolist(),
        "vertex_scale": model.vertex_scale,
        "crop_margin": model.crop_margin,
        "param_order": list(PARAM_ORDER),
        "param_shapes": [list(p.shape) for p in model.params()],
        "meta": model.meta,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    params = np.concatenate([p.ravel() for p in model.params()]).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(params.tobytes())


def load_model(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if not raw.startswith(MAGIC):
        raise ParseError(f"{path}: not a regressor model file")
    off = len(MAGIC)
    (hlen,) = struct.unpack_from("<Q", raw, off)
    off += 8
    try:
        header = json.loads(raw[off:off + hlen])
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: bad header ({exc})") from None
    flat = np.frombuffer(raw[off + hlen:], dtype="<f8").astype(float)
    shapes = [tuple(s) for s in header["param_shapes"]]
    sizes = [int(np.prod(s)) for s in shapes]
    if flat.size != sum(sizes):
        raise ParseError(f"{path}: parameter block has {flat.size} values, expected {sum(sizes)}")
    arrays = np.split(flat, np.cumsum(sizes)[:-1])
    params = [a.reshape(s).copy() for a, s in zip(arrays, shapes)]
    return RegressorModel(
        *params,
        feature_indices=np.array(header["feature_indices"], dtype=np.int64),
        vertex_mean=np.array(header["vertex_mean"], dtype=float),
        vertex_scale=float(header["vertex_scale"]),
        crop_margin=float(header["crop_margin"]),
        meta=header.get("meta", {}),
    )
