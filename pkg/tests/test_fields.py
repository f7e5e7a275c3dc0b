import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from projlab.errors import ValenceMismatch
from projlab.fields import (COV1_SYM2, ONE_FORM, SCALAR, SYM2, TensorField, Valence, compression, expansion,
                            l2_inner, l2_norm, lie_derivative_metric, lower_index, metric_field, raise_index,
                            random_field, trace_free_part)
from projlab.geometry import build_flat_torus, build_round_sphere
from projlab.operators import delta_star


@pytest.fixture(scope="module")
def torus():
    return build_flat_torus(2, 16)


@pytest.fixture(scope="module")
def sphere():
    return build_round_sphere(16)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_component_counts(n):
    assert SCALAR.n_components(n) == 1
    assert ONE_FORM.n_components(n) == n
    assert SYM2.n_components(n) == n * (n + 1) // 2
    assert COV1_SYM2.n_components(n) == n * n * (n + 1) // 2
    assert Valence("sym2", True).n_free(n) == n * (n + 1) // 2 - 1


@pytest.mark.parametrize("val", [SYM2, COV1_SYM2])
def test_storage_round_trip(val):
    n = 3
    Q, P = compression(val, n), expansion(val, n)
    assert_allclose(Q @ P, np.eye(val.n_components(n)), atol=1e-15)


def test_invalid_valence():
    with pytest.raises(ValueError):
        Valence("antisym3")
    with pytest.raises(ValueError):
        Valence("one_form", True)


def test_metric_norm_on_sphere():
    g = build_round_sphere(48)
    m = metric_field(g)
    assert abs(l2_inner(m, m) / (2 * 4 * np.pi) - 1) < 1e-4


@pytest.mark.parametrize("geom", ["torus", "sphere"])
def test_inner_symmetric_and_cauchy_schwarz(geom, torus, sphere):
    grid = torus if geom == "torus" else sphere
    for val in (ONE_FORM, SYM2, COV1_SYM2):
        a, b = random_field(grid, val, 1), random_field(grid, val, 2)
        ab, ba = l2_inner(a, b), l2_inner(b, a)
        assert abs(ab - ba) <= 1e-14 * l2_norm(a) * l2_norm(b)
        assert ab**2 <= l2_inner(a, a) * l2_inner(b, b)
        assert l2_inner(a, a) > 0


def test_inner_valence_mismatch(torus):
    with pytest.raises(ValenceMismatch):
        l2_inner(random_field(torus, SYM2, 0), random_field(torus, ONE_FORM, 0))
    other = build_flat_torus(2, 16)
    with pytest.raises(ValenceMismatch):
        l2_inner(random_field(torus, SYM2, 0), random_field(other, SYM2, 0))


def test_fourier_modes_orthogonal(torus):
    x, y = torus.nodes.T
    a = TensorField(torus, SCALAR, np.cos(2 * x + y))
    b = TensorField(torus, SCALAR, np.cos(x - 3 * y))
    assert abs(l2_inner(a, b)) < 1e-12


def test_raise_index_torus_identity(torus):
    f = random_field(torus, SYM2, 4)
    assert_array_equal(raise_index(f, 0), f.full())


def test_raise_lower_round_trip(sphere):
    f = random_field(sphere, COV1_SYM2, 5)
    for slot in range(3):
        assert_allclose(lower_index(raise_index(f, slot), sphere, slot), f.full(), atol=1e-13)


def test_raise_metric_is_identity(sphere):
    mixed = raise_index(metric_field(sphere), 0)
    assert_allclose(mixed, np.broadcast_to(np.eye(2), mixed.shape), atol=1e-13)


def test_raise_bad_slot(sphere):
    with pytest.raises(ValueError):
        raise_index(random_field(sphere, ONE_FORM, 0), 1)


def test_random_field_deterministic(sphere):
    a, b = random_field(sphere, SYM2, 7), random_field(sphere, SYM2, 7)
    assert_array_equal(a.components, b.components)


def test_random_field_seeds_decorrelated(torus):
    cos = []
    for s in range(100):
        a, b = random_field(torus, SYM2, 2 * s), random_field(torus, SYM2, 2 * s + 1)
        cos.append(abs(l2_inner(a, b)) / (l2_norm(a) * l2_norm(b)))
    assert np.median(cos) < 0.5


def test_random_field_trace_free(sphere):
    f = random_field(sphere, Valence("sym2", True), 3)
    tr = np.einsum("xij,xij->x", sphere.metric_inv, f.full())
    assert np.abs(tr).max() <= 1e-12


def test_random_field_bandwidth_guard(torus):
    with pytest.raises(ValueError):
        random_field(torus, SYM2, 0, bandwidth=8)


def test_trace_free_part_of_metric_vanishes(sphere):
    assert np.abs(trace_free_part(metric_field(sphere)).full()).max() < 1e-14


def test_lie_derivative_is_twice_delta_star(sphere):
    th = random_field(sphere, ONE_FORM, 9)
    L = lie_derivative_metric(th)
    assert_array_equal(L.components, (2.0 * delta_star(sphere).apply(th)).components)


def test_lie_derivative_constant_on_torus(torus):
    th = TensorField(torus, ONE_FORM, np.tile([0.3, -1.2], (torus.n_nodes, 1)))
    assert np.abs(lie_derivative_metric(th).components).max() < 1e-14


def test_lie_derivative_of_rotation_is_small():
    # z-rotation generator: xi = d/dphi, metric dual sin^2(theta) dphi
    out = []
    for N in (16, 32):
        g = build_round_sphere(N)
        s = np.sin(g.nodes[:, 0])
        th = TensorField(g, ONE_FORM, np.stack([0 * s, s * s], axis=1))
        out.append(l2_norm(lie_derivative_metric(th)) / l2_norm(th) / g.h**2)
    # bounded by C h^2 at both resolutions with the same constant
    assert out[1] <= out[0] + 1e-12


def test_csv_export(tmp_path, torus):
    f = random_field(torus, SYM2, 0)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x0,x1,c_00,c_01,c_11"
    assert len(lines) == torus.n_nodes + 1
