import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from projlab.cli import geodesic_experiment
from projlab.errors import DegenerateTensor, InvalidCurve, NonIntegrable, PoleProximity
from projlab.fields import ONE_FORM, SYM2, TensorField, metric_field, random_field
from projlab.geometry import build_flat_torus, build_round_sphere
from projlab.operators import delta_div
from projlab.projective import (Curve, arclength, geodesic_integrate, geodesic_residual_profile,
                                random_sphere_geodesic_starts, reconstruct_projective_metric,
                                unparametrized_geodesic_residual)


@pytest.fixture(scope="module")
def sphere():
    return build_round_sphere(24)


# -- reconstruction ------------------------------------------------------------


def test_constant_multiple_of_metric_torus():
    g = build_flat_torus(2, 16)
    rec = reconstruct_projective_metric(g, metric_field(g, 2.0))
    assert np.abs(rec.omega.components).max() == 0
    assert np.abs(rec.rho).max() < 1e-14
    # gbar = e^{2 rho} g phi^{-1} g = g / C
    assert_allclose(rec.gbar, g.metric / 2.0, atol=1e-15)


def test_constant_multiple_of_metric_sphere():
    # the discrete divergence of g is O(h^2) on the sphere, and so is rho
    r = []
    for N in (24, 48):
        g = build_round_sphere(N)
        rec = reconstruct_projective_metric(g, metric_field(g, 2.0))
        r.append(np.abs(rec.rho).max())
        assert np.abs(rec.gbar - g.metric / 2.0).max() <= 2 * r[-1]
    assert np.log2(r[0] / r[1]) >= 1.9


def test_omega_matches_divergence(sphere):
    phi = metric_field(sphere) + 0.05 * random_field(sphere, SYM2, 1)
    rec = reconstruct_projective_metric(sphere, phi, integrability_tol=np.inf)
    ref = -(delta_div(sphere, SYM2, "formula").matrix @ phi.vector()) / 3
    assert np.abs(rec.omega.vector() - ref).max() <= 1e-12 * max(np.abs(ref).max(), 1.0)


def test_degenerate_rejected(sphere):
    with pytest.raises(DegenerateTensor):
        reconstruct_projective_metric(sphere, metric_field(sphere, 0.0))
    # determinant changes sign between nodes
    z = np.cos(sphere.nodes[:, 0]) + 0.01
    c = np.stack([z, 0 * z, z * np.sin(sphere.nodes[:, 0]) ** 2], axis=1)
    c[:, 2] = np.sin(sphere.nodes[:, 0]) ** 2
    with pytest.raises(DegenerateTensor):
        reconstruct_projective_metric(sphere, TensorField(sphere, SYM2, c))
    with pytest.raises(DegenerateTensor):
        reconstruct_projective_metric(sphere, random_field(sphere, ONE_FORM, 0))


def test_non_kernel_field_is_non_integrable(sphere):
    psi = random_field(sphere, SYM2, 4)
    psi = TensorField(sphere, SYM2, psi.components / np.abs(psi.full()).max())
    phi = metric_field(sphere) + 0.2 * psi
    with pytest.raises(NonIntegrable):
        reconstruct_projective_metric(sphere, phi)


def test_summary_json(sphere):
    rec = reconstruct_projective_metric(sphere, metric_field(sphere))
    d = json.loads(rec.to_json())
    assert d["grid_hash"] == sphere.grid_hash
    assert d["gbar_min_eigenvalue"] > 0


# -- geodesics -----------------------------------------------------------------


def test_equator_returns():
    g = build_round_sphere(24)
    c = geodesic_integrate(g, [np.pi / 2, 0.0], [0.0, 1.0], 2 * np.pi, 800)
    assert np.abs(c.x[:, 0] - np.pi / 2).max() < 1e-12
    assert abs(c.x[-1, 1] - 2 * np.pi) < 1e-6


def test_torus_straight_line():
    g = build_flat_torus(2, 8)
    c = geodesic_integrate(g, [0.1, 0.2], [0.3, -0.7], 2.0, 400)
    assert_allclose(c.x[-1], [0.7, -1.2], atol=1e-14)
    assert_allclose(c.v, np.broadcast_to([0.3, -0.7], c.v.shape), atol=1e-15)


def test_energy_conserved(sphere):
    x0, v0 = random_sphere_geodesic_starts(1, 3)[0]
    c = geodesic_integrate(sphere, x0, v0, 2 * np.pi, 1000)
    G = sphere.metric_at(c.x)
    e = np.einsum("ti,tij,tj->t", c.v, G, c.v)
    assert np.abs(e / e[0] - 1).max() < 1e-8
    assert arclength(c)[-1] == pytest.approx(2 * np.pi, rel=1e-8)


def test_random_starts_stay_away_from_poles(sphere):
    for x0, v0 in random_sphere_geodesic_starts(10, 0):
        assert v0 @ sphere.metric_at(x0[None])[0] @ v0 == pytest.approx(1.0)
        c = geodesic_integrate(sphere, x0, v0, 2 * np.pi, 700)
        assert np.sin(c.x[:, 0]).min() >= 0.5 - 1e-6


def test_pole_proximity(sphere):
    with pytest.raises(PoleProximity):
        geodesic_integrate(sphere, [0.05, 0.0], [1.0, 0.0], 1.0, 100)
    with pytest.raises(PoleProximity):
        geodesic_integrate(sphere, [0.5, 0.0], [-1.0, 0.0], 1.0, 100)


def test_too_few_steps(sphere):
    with pytest.raises(ValueError):
        geodesic_integrate(sphere, [1.0, 0.0], [0.0, 1.0], 2.0, 100)


def test_residual_controls(sphere):
    x0, v0 = random_sphere_geodesic_starts(1, 5)[0]
    c = geodesic_integrate(sphere, x0, v0, 2 * np.pi, 700)
    assert unparametrized_geodesic_residual(sphere, sphere.metric, c) <= 1e-6
    assert unparametrized_geodesic_residual(sphere, np.exp(0.2) * sphere.metric, c) <= 1e-6


def test_residual_detects_non_projective_metric(sphere):
    # a conformal factor that is not constant bends g-geodesics
    x0, v0 = random_sphere_geodesic_starts(1, 5)[0]
    c = geodesic_integrate(sphere, x0, v0, 2 * np.pi, 700)
    f = np.exp(0.2 * np.cos(sphere.nodes[:, 1]) * np.sin(sphere.nodes[:, 0]))
    assert unparametrized_geodesic_residual(sphere, f[:, None, None] * sphere.metric, c) > 1e-2


def test_invalid_curves(sphere):
    short = Curve(sphere, np.linspace(0, 1, 50), np.full((50, 2), 1.0), np.ones((50, 2)))
    with pytest.raises(InvalidCurve):
        unparametrized_geodesic_residual(sphere, sphere.metric, short)
    still = Curve(sphere, np.linspace(0, 1, 120), np.full((120, 2), 1.0), np.zeros((120, 2)))
    with pytest.raises(InvalidCurve):
        unparametrized_geodesic_residual(sphere, sphere.metric, still)


def test_curve_csv(tmp_path, sphere):
    c = geodesic_integrate(sphere, [np.pi / 2, 0.0], [0.0, 1.0], 1.0, 100)
    c.to_csv(tmp_path / "c.csv", geodesic_residual_profile(sphere, sphere.metric, c))
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "arclength,x0,x1,residual"
    assert len(lines) == 102


# -- end to end ------------------------------------------------------------------


def test_projective_experiment_refines():
    out = {}
    for N in (24, 48):
        res, _, rec = geodesic_experiment(build_round_sphere(N), 0.05, 0, 10)
        assert res["kernel_count"] == 6
        assert res["reconstruction"]["gbar_min_eigenvalue"] > 0
        assert res["max_residual"] <= 5 * (res["h"] ** 2 + rec.kernel_residual)
        out[N] = res
    order = np.log2(out[24]["max_residual"] / out[48]["max_residual"])
    assert order >= 1.5
    # gbar is a genuinely different metric, not a rescaling of g
    assert out[48]["reconstruction"]["rho_range"][1] - out[48]["reconstruction"]["rho_range"][0] > 1e-3
