import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import edge_loss_loop, l1_mean, random_rotation
from perspective_face import gradcheck
from perspective_face.errors import DegenerateEdge, FrameMismatch, SizeMismatch
from perspective_face.geometry import CAMERA, LandmarkSet2D, VertexSet
from perspective_face.losses import (LossWeights, edge_loss, edge_loss_batch, edge_lengths_diff, l1_point_loss_batch,
                                     landmark_loss, total_loss, vertex_loss)
from perspective_face.topology import FaceTopology

TRI = FaceTopology([[0, 1, 2]], 3)
EQUILATERAL = np.array([[0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
coords = st.floats(-5, 5, allow_nan=False)


def test_vertex_loss_examples():
    gt = np.zeros((1, 3))
    loss, g = vertex_loss(np.array([[1.0, 2.0, 3.0]]), gt)
    assert loss == 6.0
    assert np.array_equal(g, [[1, 1, 1]])
    loss, g = vertex_loss(gt, gt)
    assert loss == 0.0 and not g.any()


def test_uniform_shift_adds_three_delta(rng):
    gt = rng.normal(size=(40, 3))
    for delta in (0.5, 0.125, 2.0):
        assert vertex_loss(gt + delta, gt)[0] == pytest.approx(3 * delta, rel=1e-15)


def test_landmark_loss_examples():
    loss, g = landmark_loss(np.array([[3.0, 4.0]]), np.zeros((1, 2)))
    assert loss == 7.0
    assert np.array_equal(g, [[1, 1]])
    assert landmark_loss(np.ones((4, 2)), np.ones((4, 2)))[0] == 0.0


def test_edge_loss_examples():
    assert edge_loss(2 * EQUILATERAL, EQUILATERAL, TRI.edges)[0] == pytest.approx(1.0, abs=1e-15)
    R = random_rotation(np.random.default_rng(3))
    loss, _ = edge_loss(EQUILATERAL @ R + [1, 2, 3], EQUILATERAL, TRI.edges)
    assert loss < 1e-15


def test_degenerate_edge():
    pred = EQUILATERAL.copy()
    pred[1] = pred[0]
    with pytest.raises(DegenerateEdge) as exc:
        edge_loss(pred, EQUILATERAL, TRI.edges)
    assert exc.value.index == 0


def test_inputs_are_checked():
    with pytest.raises(SizeMismatch):
        vertex_loss(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(SizeMismatch):
        landmark_loss(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(FrameMismatch):
        vertex_loss(VertexSet(np.zeros((2, 3))), VertexSet(np.zeros((2, 3)), CAMERA))
    with pytest.raises(SizeMismatch):
        edge_loss(np.ones((2, 3)), np.ones((2, 3)), TRI.edges)
    loss, _ = landmark_loss(LandmarkSet2D([[1.0, 1.0]]), LandmarkSet2D([[0.0, 0.0]]))
    assert loss == 2.0


def test_losses_match_loop_oracles(rng, small_model):
    model, topo = small_model
    gt = model.template
    pred = gt + rng.normal(0, 0.005, gt.shape)
    assert vertex_loss(pred, gt)[0] == pytest.approx(l1_mean(pred, gt), rel=1e-12)
    assert edge_loss(pred, gt, topo.edges)[0] == pytest.approx(edge_loss_loop(pred, gt, topo.triangles), rel=1e-12)
    p, q = rng.uniform(0, 800, (50, 2)), rng.uniform(0, 800, (50, 2))
    assert landmark_loss(p, q)[0] == pytest.approx(l1_mean(p, q), rel=1e-12)


def test_total_loss_weighting():
    # 3-4-5 triangle scaled by 1.5 about vertex 0 plus one isolated vertex:
    # edge diffs (1.5, 2, 2.5) average 2; vertex L1 (0 + 1.5 + 2 + 0.5) / 4 = 1
    topo = FaceTopology([[0, 1, 2]], 4)
    gt_v = np.array([[0.0, 0, 0], [3, 0, 0], [0, 4, 0], [1, 1, 1]])
    pred_v = gt_v * [[1.5], [1.5], [1.5], [1.0]] + [[0, 0, 0], [0, 0, 0], [0, 0, 0], [0.5, 0, 0]]
    gt_p = np.zeros((4, 2))
    pred_p = np.full((4, 2), 1.5)
    rep = total_loss(pred_v, gt_v, pred_p, gt_p, topo.edges)
    assert (rep.l_vert, rep.l_edge, rep.l_land) == (1.0, 2.0, 3.0)
    assert rep.l_total == 7.5
    zero = total_loss(pred_v, gt_v, pred_p, gt_p, topo.edges, LossWeights(0.0, 0.0))
    assert zero.l_total == zero.l_vert
    assert LossWeights() == LossWeights(0.25, 2.0)
    with pytest.raises(ValueError):
        LossWeights(-1.0, 0.0)


def test_total_loss_perfect_prediction(small_model):
    model, topo = small_model
    p = np.ones((model.n_vertices, 2))
    rep = total_loss(model.template, model.template, p, p, topo.edges)
    assert (rep.l_vert, rep.l_edge, rep.l_land, rep.l_total) == (0.0, 0.0, 0.0, 0.0)
    assert not rep.grad_vertices.any() and not rep.grad_landmarks.any()


@given(st.integers(0, 2**31), st.floats(0, 3), st.floats(0, 3))
def test_report_is_consistent(seed, w0, w1):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(6, 3))
    pred = gt + rng.normal(0, 0.1, gt.shape)
    gp, pp = rng.normal(size=(6, 2)), rng.normal(size=(6, 2))
    edges = FaceTopology([[0, 1, 2], [2, 3, 4], [3, 4, 5]], 6).edges
    rep = total_loss(pred, gt, pp, gp, edges, LossWeights(w0, w1))
    assert abs(rep.l_total - (rep.l_vert + w0 * rep.l_edge + w1 * rep.l_land)) <= 1e-12
    assert np.all(np.isfinite(rep.grad_vertices)) and np.all(np.isfinite(rep.grad_landmarks))
    _, gv = vertex_loss(pred, gt)
    _, ge = edge_loss(pred, gt, edges)
    _, gl = landmark_loss(pp, gp)
    assert np.allclose(rep.grad_vertices, gv + w0 * ge, rtol=0, atol=1e-15)
    assert np.allclose(rep.grad_landmarks, w1 * gl, rtol=0, atol=1e-15)


@given(arrays(float, (5, 3), elements=coords), arrays(float, (5, 3), elements=coords))
def test_nonnegative_symmetric_and_zero_iff_equal(a, b):
    la, _ = vertex_loss(a, b)
    lb, _ = vertex_loss(b, a)
    assert la == lb and la >= 0
    assert (la == 0) == np.array_equal(a, b)
    pa, pb = a[:, :2], b[:, :2]
    assert landmark_loss(pa, pb)[0] == landmark_loss(pb, pa)[0] >= 0


@given(st.integers(0, 2**31))
def test_edge_loss_symmetric_and_zero_iff_lengths_equal(seed):
    rng = np.random.default_rng(seed)
    edges = FaceTopology([[0, 1, 2], [1, 3, 2]], 4).edges
    a, b = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    assert edge_loss(a, b, edges)[0] == pytest.approx(edge_loss(b, a, edges)[0], rel=1e-15, abs=0)
    assert edge_loss(a, b, edges)[0] > 0
    assert np.array_equal(edge_lengths_diff(a, a, edges), np.zeros(6))


@given(st.integers(0, 2**31))
def test_edge_loss_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    _, topo = gradcheck.make_shape_model(30, 0)
    gt = rng.normal(size=(30, 3))
    pred = gt * rng.uniform(0.5, 1.5) + rng.normal(0, 0.05, gt.shape)
    moved = pred @ random_rotation(rng) + rng.normal(size=3)
    assert abs(edge_loss(moved, gt, topo.edges)[0] - edge_loss(pred, gt, topo.edges)[0]) < 1e-9


def test_batch_helpers_agree_with_single(rng, small_model):
    model, topo = small_model
    gt = model.template + rng.normal(0, 0.004, (3,) + model.template.shape)
    pred = gt + rng.normal(0, 0.002, gt.shape)
    lb, gb = edge_loss_batch(pred, gt, topo.edges)
    vb, vg = l1_point_loss_batch(pred, gt)
    for i in range(3):
        l, g = edge_loss(pred[i], gt[i], topo.edges)
        assert lb[i] == pytest.approx(l, rel=1e-14) and np.allclose(gb[i], g, rtol=1e-12, atol=1e-15)
        l, g = vertex_loss(pred[i], gt[i])
        assert vb[i] == l and np.array_equal(vg[i], g)


@pytest.mark.parametrize("name", ["vertex_loss", "edge_loss", "landmark_loss", "total_loss"])
def test_gradients_match_finite_differences(name):
    rng = np.random.default_rng(11)
    worst = max(gradcheck.CHECKS[name](rng) for _ in range(10))
    assert worst < 1e-5
