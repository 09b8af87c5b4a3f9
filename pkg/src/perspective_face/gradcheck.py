"""Finite-difference checks of every analytic gradient in the package.

Each ``check_*`` function draws a random point away from the kinks of the L1
losses, compares the analytic gradient with central differences and returns
the relative error ``max|a - f| / max(max|a|, max|f|)``.
"""

from __future__ import annotations

import numpy as np

from . import losses, pnp, regressor
from .geometry import CameraIntrinsics, rotation_from_axis_angle
from .synth import make_shape_model

STEP = 1e-6
KINK_MARGIN = 1e-4


def central_difference(f, x, h=STEP):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, numeric):
    a, b = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.abs(a - b).max() / scale)


def _offsets(rng, shape, lo=1e-3, hi=1e-1):
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(lo, hi, size=shape)


def _mesh(rng, n=12):
    _, topo = make_shape_model(n, 0)
    gt = rng.normal(size=(n, 3))
    return gt, topo.edges


def _smooth_edge_pair(rng, n=12):
    while True:
        gt, edges = _mesh(rng, n)
        pred = gt * rng.uniform(1.1, 1.5) + 0.01 * rng.normal(size=gt.shape)
        diff = losses.edge_lengths_diff(pred, gt, edges)
        if np.abs(diff).min() > KINK_MARGIN:
            return pred, gt, edges


def check_vertex_loss(rng):
    gt = rng.normal(size=(10, 3))
    pred = gt + _offsets(rng, gt.shape)
    _, g = losses.vertex_loss(pred, gt)
    return relative_error(g, central_difference(lambda x: losses.vertex_loss(x, gt)[0], pred))


def check_landmark_loss(rng):
    gt = rng.uniform(0, 800, size=(10, 2))
    pred = gt + _offsets(rng, gt.shape, 1e-2, 5.0)
    _, g = losses.landmark_loss(pred, gt)
    return relative_error(g, central_difference(lambda x: losses.landmark_loss(x, gt)[0], pred))


def check_edge_loss(rng):
    pred, gt, edges = _smooth_edge_pair(rng)
    _, g = losses.edge_loss(pred, gt, edges)
    return relative_error(g, central_difference(lambda x: losses.edge_loss(x, gt, edges)[0], pred))


def check_total_loss(rng):
    pred_v, gt_v, edges = _smooth_edge_pair(rng)
    pred_v = pred_v + _offsets(rng, pred_v.shape, 1e-3, 1e-2)
    while np.abs(losses.edge_lengths_diff(pred_v, gt_v, edges)).min() <= KINK_MARGIN or \
            np.abs(pred_v - gt_v).min() <= KINK_MARGIN:
        pred_v, gt_v, edges = _smooth_edge_pair(rng)
        pred_v = pred_v + _offsets(rng, pred_v.shape, 1e-3, 1e-2)
    gt_p = rng.uniform(0, 800, size=(len(gt_v), 2))
    pred_p = gt_p + _offsets(rng, gt_p.shape, 1e-2, 5.0)
    w = losses.LossWeights()
    rep = losses.total_loss(pred_v, gt_v, pred_p, gt_p, edges, w)
    fv = central_difference(lambda x: losses.total_loss(x, gt_v, pred_p, gt_p, edges, w).l_total, pred_v)
    fp = central_difference(lambda x: losses.total_loss(pred_v, gt_v, x, gt_p, edges, w).l_total, pred_p)
    return max(relative_error(rep.grad_vertices, fv), relative_error(rep.grad_landmarks, fp))


def check_pnp_jacobian(rng):
    X = rng.uniform(-0.1, 0.1, size=(20, 3))
    R = rotation_from_axis_angle(rng.uniform(-1.0, 1.0, 3))
    T = np.array([rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1), rng.uniform(0.4, 0.8)])
    K = CameraIntrinsics(1000, 1000, 400, 400)
    x = np.zeros((20, 2))
    J = pnp.jacobian(X, R, T, K)
    numeric = np.zeros_like(J)
    for k in range(6):
        d = np.zeros(6)
        d[k] = STEP
        rp, _ = pnp.residuals(X, x, R @ rotation_from_axis_angle(d[:3]), T + d[3:], K)
        rm, _ = pnp.residuals(X, x, R @ rotation_from_axis_angle(-d[:3]), T - d[3:], K)
        numeric[:, k] = (rp - rm) / (2 * STEP)
    return relative_error(J, numeric)


def small_regressor_problem(rng, n_vertices=12, n_features=4, hidden=6, batch=3):
    """Random tiny model and batch whose outputs sit away from every L1 kink."""
    model_shape, topo = make_shape_model(n_vertices, 2, seed=int(rng.integers(1 << 30)))
    while True:
        model = regressor.init_model(model_shape.template, 0.01, n_features, hidden,
                                     seed=int(rng.integers(1 << 30)))
        for p in model.params():
            p[...] = rng.normal(0.0, 0.5, p.shape)
        obs = regressor.Observation(rng.uniform(-1, 1, size=(batch, model.input_dim)),
                                    rng.uniform(200, 600, size=(batch, 2)),
                                    rng.uniform(50, 200, size=batch))
        pv, pp = regressor.forward_batch(model, obs)
        gt_v = pv + _offsets(rng, pv.shape, 1e-3, 5e-3)
        gt_p = pp + _offsets(rng, pp.shape, 1.0, 20.0)
        s = model.vertex_scale
        ok_v = np.abs(pv - gt_v).min() / s > KINK_MARGIN
        ok_e = all(np.abs(losses.edge_lengths_diff(pv[b] / s, gt_v[b] / s, topo.edges)).min() > KINK_MARGIN
                   for b in range(batch))
        if ok_v and ok_e:
            return model, obs, gt_v, gt_p, topo.edges


def check_regressor(rng):
    model, obs, gt_v, gt_p, edges = small_regressor_problem(rng)
    _, _, grads = regressor.loss_and_grads(model, obs, gt_v, gt_p, edges)
    worst = 0.0
    for p, g in zip(model.params(), grads):
        def f(val, p=p):
            saved = p.copy()
            p[...] = val
            out = regressor.loss_and_grads(model, obs, gt_v, gt_p, edges)[0]
            p[...] = saved
            return out
        worst = max(worst, relative_error(g, central_difference(f, p)))
    return worst


def check_feature_jacobian(rng):
    model, obs, _, _, _ = small_regressor_problem(rng, batch=1)
    x = obs.features[0]
    J = regressor.feature_jacobian(model, x)

    def outputs(val):
        o = regressor.Observation(val[None], obs.center, obs.half)
        v, p = regressor.forward_batch(model, o)
        return np.concatenate([v.ravel(), p.ravel()])

    numeric = np.zeros_like(J)
    for k in range(x.size):
        d = np.zeros_like(x)
        d[k] = STEP
        numeric[:, k] = (outputs(x + d) - outputs(x - d)) / (2 * STEP)
    scale = np.concatenate([np.full(3 * model.n_vertices, model.vertex_scale),
                            np.repeat(obs.half, 2 * model.n_vertices)])
    return relative_error(J * scale[:, None], numeric)


CHECKS = {
    "vertex_loss": check_vertex_loss,
    "edge_loss": check_edge_loss,
    "landmark_loss": check_landmark_loss,
    "total_loss": check_total_loss,
    "pnp_jacobian": check_pnp_jacobian,
    "regressor": check_regressor,
    "feature_jacobian": check_feature_jacobian,
}


def run_all(n_points=50, seed=0, model_points=None):
    """Max relative error per check over ``n_points`` random points each."""
    out = {}
    for name, check in CHECKS.items():
        rng = np.random.default_rng([seed, len(out)])
        n = n_points if name not in ("regressor", "feature_jacobian") or model_points is None else model_points
        out[name] = max(check(rng) for _ in range(n))
    return out
