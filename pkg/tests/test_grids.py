"""Grid construction and Lagrange operator behavior."""
import numpy as np
import pytest

from perisum.errors import DomainError
from perisum.grids import (build_far_grids, build_near_grid, build_operator,
                           lagrange_weights)
from perisum.model import TargetBox


def test_far_grids_reference_geometry():
    src, obs = build_far_grids(TargetBox((50.0, 50.0, 50.0)), (10, 10, 10))
    assert np.allclose(src.axis_coords(0), np.arange(10) * 5.0)
    assert np.allclose(obs.axis_coords(0), np.arange(10) * 5.0 + 2.5)
    assert src.spacing == (5.0, 5.0, 5.0)
    # minimum source-observer distance per axis equals half a spacing
    d = np.abs(obs.axis_coords(0)[None, :] - src.axis_coords(0)[:, None])
    assert abs(d.min() - 2.5) < 1e-12


def test_far_grids_two_point():
    src, obs = build_far_grids(TargetBox((1.0, 1.0, 1.0)), (2, 2, 2))
    assert np.allclose(src.axis_coords(0), [0.0, 0.5])
    assert np.allclose(obs.axis_coords(0), [0.25, 0.75])


def test_far_grids_degenerate_axis():
    src, obs = build_far_grids(TargetBox((1.0, 1.0, 0.0)), (4, 4, 4))
    assert src.dims[2] == 1 and obs.dims[2] == 1
    assert src.spacing[2] == 0.0


def test_near_grid_two_point_corners():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (2, 2, 2))
    pts = g.points()
    corners = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)],
                       dtype=float)
    assert np.allclose(np.sort(pts, axis=0), np.sort(corners, axis=0))


def test_near_grid_spans_box():
    g = build_near_grid(TargetBox((2.0, 3.0, 4.0)), (5, 7, 9))
    for a, d in enumerate((2.0, 3.0, 4.0)):
        c = g.axis_coords(a)
        assert c[0] == 0.0 and abs(c[-1] - d) < 1e-12


def test_lagrange_cardinal_property():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    node = np.array([0.5, 0.25, 0.75])      # exactly on a grid node
    stencil = lagrange_weights(g, node, 2)
    weights = np.array([w for _, w in stencil])
    assert np.isclose(weights.max(), 1.0, atol=1e-14)
    assert np.sum(np.abs(weights) > 1e-13) == 1


def test_lagrange_order1_midpoint():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    mid = np.array([0.125, 0.125, 0.125])
    stencil = lagrange_weights(g, mid, 1)
    w = sorted(abs(wt) for _, wt in stencil)
    assert np.allclose(w, [0.125] * 8)       # (1/2)^3 per corner


def test_lagrange_cubic_exactness():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (7, 7, 7))
    f = lambda p: p[:, 0] ** 3 - 2 * p[:, 1] ** 3 + 0.5 * p[:, 2] ** 3 \
        + p[:, 0] * p[:, 1] * p[:, 2]
    gv = f(g.points())
    rng = np.random.default_rng(1)
    pts = rng.uniform(0.05, 0.95, (50, 3))
    op = build_operator(g, pts, 3, "interpolate")
    err = np.abs(op.interpolate(gv) - f(pts))
    assert err.max() < 1e-12


def test_partition_of_unity():
    g = build_near_grid(TargetBox((1.0, 2.0, 3.0)), (6, 8, 9))
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 1, (200, 3)) * np.array([1.0, 2.0, 3.0])
    for order in (1, 2, 3, 4):
        op = build_operator(g, pts, order, "interpolate")
        sums = op.flat_weight.sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) < 1e-12


def test_degree_reproduction_property():
    rng = np.random.default_rng(3)
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (9, 9, 9))
    pts = rng.uniform(0, 1, (80, 3))
    for q in (1, 2, 3):
        coef = rng.normal(size=(q + 1, q + 1, q + 1))

        def f(p):
            out = np.zeros(p.shape[0])
            for i in range(q + 1):
                for j in range(q + 1):
                    for k in range(q + 1):
                        if i + j + k <= q:
                            out += coef[i, j, k] * p[:, 0] ** i * p[:, 1] ** j \
                                * p[:, 2] ** k
            return out

        op = build_operator(g, pts, q, "interpolate")
        err = np.abs(op.interpolate(f(g.points())) - f(pts))
        assert err.max() < 1e-10


def test_stencil_locality():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (11, 11, 11))
    rng = np.random.default_rng(4)
    pts = rng.uniform(0, 1, (100, 3))
    for q in (1, 2, 3):
        op = build_operator(g, pts, q, "interpolate")
        gp = g.points()[op.flat_index]          # (P, S, 3)
        reach = np.abs(gp - pts[:, None, :]).max()
        assert reach <= ((q + 1) / 2.0 + 1.0) * max(g.spacing)


def test_project_single_source_on_node():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    node_idx = 31
    node = g.points()[node_idx]
    op = build_operator(g, node.reshape(1, 3), 2, "project")
    arr = op.project(np.array([1.0 + 0j]))
    assert abs(arr[node_idx] - 1.0) < 1e-14
    arr[node_idx] = 0.0
    assert np.max(np.abs(arr)) < 1e-13


def test_project_conserves_total_charge():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (6, 6, 6))
    rng = np.random.default_rng(5)
    pts = rng.uniform(0.1, 0.9, (40, 3))
    q = rng.normal(size=40) + 1j * rng.normal(size=40)
    op = build_operator(g, pts, 2, "project")
    assert abs(op.project(q).sum() - q.sum()) < 1e-12


def test_project_opposite_charges_cancel():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    p = np.array([[0.37, 0.52, 0.66], [0.37, 0.52, 0.66]])
    op = build_operator(g, p, 2, "project")
    arr = op.project(np.array([1.0, -1.0]))
    assert np.max(np.abs(arr)) < 1e-14


def test_interpolate_constant_field():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 6, 7))
    rng = np.random.default_rng(6)
    pts = rng.uniform(0, 1, (30, 3))
    op = build_operator(g, pts, 2, "interpolate")
    c = 2.5 - 1.25j
    vals = op.interpolate(np.full(g.size, c))
    assert np.max(np.abs(vals - c)) < 1e-13


def test_transpose_identity():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (7, 7, 7))
    rng = np.random.default_rng(7)
    pts = rng.uniform(0, 1, (60, 3))
    op = build_operator(g, pts, 2, "interpolate")
    q = rng.normal(size=60) + 1j * rng.normal(size=60)
    u = rng.normal(size=g.size) + 1j * rng.normal(size=g.size)
    lhs = np.sum(op.interpolate(u) * q)          # bilinear pairing
    rhs = np.sum(u * op.project(q))
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)


def test_point_outside_hull_raises():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    with pytest.raises(DomainError):
        build_operator(g, np.array([[1.5, 0.5, 0.5]]), 2, "interpolate")
    # within an explicit margin it extrapolates instead
    build_operator(g, np.array([[1.05, 0.5, 0.5]]), 2, "interpolate", margin=0.1)


def test_length_mismatch_raises():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (5, 5, 5))
    op = build_operator(g, np.array([[0.5, 0.5, 0.5]]), 2, "project")
    with pytest.raises(ValueError):
        op.project(np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        op.interpolate(np.zeros(7))


def test_degenerate_axis_weight_one():
    g = build_near_grid(TargetBox((1.0, 1.0, 0.0)), (5, 5, 1))
    op = build_operator(g, np.array([[0.5, 0.5, 0.0]]), 2, "interpolate")
    assert op.axis_weights[2].shape == (1, 1)
    assert op.axis_weights[2][0, 0] == 1.0


def test_index_linearization_matches_c_order():
    g = build_near_grid(TargetBox((1.0, 1.0, 1.0)), (3, 4, 5))
    pts = g.points()
    # n = l*Ngz*Ngy + p*Ngz + q
    for l, p, q in [(0, 0, 0), (1, 2, 3), (2, 3, 4)]:
        n = l * 5 * 4 + p * 5 + q
        expect = [g.axis_coords(0)[l], g.axis_coords(1)[p], g.axis_coords(2)[q]]
        assert np.allclose(pts[n], expect)
