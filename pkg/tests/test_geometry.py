import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from projlab.errors import DegeneratePlane, GridError
from projlab.geometry import (build_flat_torus, build_round_sphere, christoffels_from_metric,
                              record_grid, sectional_curvature)


@pytest.fixture(scope="module")
def sphere():
    return build_round_sphere(24)


def test_torus_basic():
    g = build_flat_torus(2, 8)
    assert g.n_nodes == 64
    assert np.all(g.christoffels == 0)
    assert g.volume == pytest.approx((2 * np.pi) ** 2, rel=1e-15)
    assert_allclose(g.quad_weights, (2 * np.pi / 8) ** 2)


def test_torus_three_dim_volume():
    g = build_flat_torus(3, 16)
    assert_allclose(g.volume, (2 * np.pi) ** 3, rtol=1e-14)


def test_torus_curvature_zero():
    g = build_flat_torus(2, 64)
    assert np.all(g.riemann == 0)
    for x in (0, 100, 4095):
        assert sectional_curvature(g, x, ([1, 0], [0.3, 1])) == 0


@pytest.mark.parametrize("args", [(2, 7), (2, 2), (5, 8), (1, 8)])
def test_torus_rejects(args):
    with pytest.raises(GridError):
        build_flat_torus(*args)


def test_torus_rejects_nonpositive_period():
    with pytest.raises(GridError):
        build_flat_torus(2, 8, L=0.0)


def test_sphere_area():
    g = build_round_sphere(48)
    assert g.shape == (48, 96)
    assert abs(g.volume / (4 * np.pi) - 1) < 1e-4
    assert_allclose(g.quad_weights, np.sin(g.nodes[:, 0]) * np.prod(g.spacing), rtol=2e-4)


def test_sphere_staggered_colatitudes(sphere):
    th = np.unique(sphere.nodes[:, 0])
    assert_allclose(th, (np.arange(24) + 0.5) * np.pi / 24)


def test_sphere_rejects():
    with pytest.raises(GridError):
        build_round_sphere(6)
    with pytest.raises(GridError):
        build_round_sphere(16, 20)


def test_metric_inverse(sphere):
    eye = np.einsum("xij,xjk->xik", sphere.metric_inv, sphere.metric)
    assert_allclose(eye, np.broadcast_to(np.eye(2), eye.shape), atol=1e-12)


def test_christoffel_symmetric(sphere):
    G = sphere.christoffels
    assert_allclose(G, np.swapaxes(G, 2, 3), atol=0)


def test_sphere_curvature(sphere):
    rng = np.random.default_rng(1)
    for x in rng.integers(0, sphere.n_nodes, 20):
        assert abs(sectional_curvature(sphere, x, ([1, 0], [0, 1])) - 1) < 1e-10
    assert_allclose(sphere.ricci, sphere.metric, atol=1e-10)


def test_sectional_curvature_scale_invariant(sphere):
    u, v = np.array([1.0, 0.2]), np.array([0.1, 3.0])
    a = sectional_curvature(sphere, 5, (u, v))
    b = sectional_curvature(sphere, 5, (2 * u, 2 * v))
    assert_allclose(a, b, rtol=1e-14)


def test_degenerate_plane(sphere):
    with pytest.raises(DegeneratePlane):
        sectional_curvature(sphere, 3, ([1, 1], [2, 2]))


def test_pole_continuation_is_involution(sphere):
    # the colatitude direction reverses across the pole, so a second step
    # of the same sign comes back
    up, crossed = sphere.shift(0, -1)
    assert crossed.sum() == sphere.shape[1]
    assert np.all(up[up[crossed]] == np.flatnonzero(crossed))
    # the partner sits at phi + pi
    phi = sphere.nodes[:, 1]
    d = np.mod(phi[up[crossed]] - phi[crossed], 2 * np.pi)
    assert_allclose(d, np.pi, atol=1e-12)


def test_fd_christoffels_second_order():
    errs = []
    for N in (48, 96, 192):
        g = build_round_sphere(N)
        band = np.sin(g.nodes[:, 0]) > 0.5
        G = christoffels_from_metric(g, g.metric)
        errs.append(np.abs(G - g.christoffels)[band].max())
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.9), orders


def test_torus_quadrature_exact_for_band_limited():
    g = build_flat_torus(2, 16)
    x, y = g.nodes.T
    f = 1 + np.cos(3 * x) * np.sin(5 * y) + np.cos(7 * x)
    assert_allclose(np.sum(g.quad_weights * f), (2 * np.pi) ** 2, rtol=1e-13)


def test_grid_hash_reproducible(tmp_path):
    a, b = build_round_sphere(16), build_round_sphere(16)
    assert a.grid_hash == b.grid_hash
    assert a.grid_hash != build_round_sphere(24).grid_hash
    path = tmp_path / "grids.json"
    record_grid(a, path)
    record_grid(build_flat_torus(2, 8), path)
    data = json.loads(path.read_text())
    assert len(data) == 2 and a.grid_hash in data.values()
