import json

import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from projlab.fields import ONE_FORM, SYM2, TensorField, metric_field, random_field
from projlab.geometry import build_flat_torus, build_round_sphere
from projlab.operators import delta_star, eisenhart_E, normal_operator, sinjukov_S
from projlab.spectral import (SpectrumReport, analytic_sphere_spectrum, classify_sinjukov_eigentensor, clusters,
                              compare_branches, compare_to_reference, convergence_study, derived_sphere_spectrum,
                              exact_fraction, hodge_split, kernel_dimension, richardson, solve_smallest,
                              torus_fourier_oracle, torus_fourier_spectrum)


def _report(vals):
    return SpectrumReport("X", {}, np.asarray(vals, dtype=float), np.zeros(len(vals)))


# -- oracle ---------------------------------------------------------------------


def test_oracle_delta_star_by_hand():
    # one-sided symbols have modulus 2 sin(h/2)/h; the off-diagonal slot halves it
    N, L = 16, 2 * np.pi
    h = L / N
    a2 = (2 * np.sin(h / 2) / h) ** 2
    assert_allclose(torus_fourier_oracle(2, N, L, "delta_star", (1, 0)), [a2 / 2, a2], rtol=1e-13)


def test_oracle_zero_mode():
    assert_allclose(torus_fourier_oracle(2, 8, 2 * np.pi, "SstarS", (0, 0)), 0, atol=1e-14)
    assert_allclose(torus_fourier_oracle(2, 8, 2 * np.pi, "EstarE", (0, 0)), 0, atol=1e-14)


def test_oracle_rejects_aliased_mode():
    with pytest.raises(ValueError):
        torus_fourier_oracle(2, 8, 2 * np.pi, "SstarS", (5, 0))


@pytest.mark.parametrize("tag,build", [("SstarS", sinjukov_S), ("EstarE", eisenhart_E),
                                       ("delta_star", delta_star)])
def test_oracle_matches_assembly(tag, build):
    g = build_flat_torus(2, 8)
    P = normal_operator(build(g))
    dense = solve_smallest(P.A, P.M, P.A.shape[0] // 4, mode="dense").eigenvalues
    ref = torus_fourier_spectrum(2, 8, 2 * np.pi, tag)[: len(dense)]
    assert_allclose(dense, ref, rtol=1e-10, atol=1e-10 * ref.max())


# -- solver ---------------------------------------------------------------------


@pytest.mark.parametrize("build", [sinjukov_S, eisenhart_E])
def test_dense_and_shift_invert_agree(build):
    g = build_flat_torus(2, 16)
    P = normal_operator(build(g))
    a = solve_smallest(P.A, P.M, 24, mode="dense")
    b = solve_smallest(P.A, P.M, 24, mode="shift_invert")
    nz = a.eigenvalues > 1e-8
    assert_allclose(b.eigenvalues[nz], a.eigenvalues[nz], rtol=1e-9)
    assert np.all(np.abs(b.eigenvalues[~nz]) < 1e-8)
    assert np.all(b.residuals < 1e-8)


def test_solver_rejects_bad_k():
    A = sp.identity(40, format="csr")
    with pytest.raises(ValueError):
        solve_smallest(A, A, 11)
    with pytest.raises(ValueError):
        solve_smallest(A, A, 2, mode="lanczos")


def test_solver_diagonal_pencil():
    d = np.arange(1.0, 101.0)
    rep = solve_smallest(sp.diags(d), sp.diags(2 * np.ones(100)), 5, mode="shift_invert")
    assert_allclose(rep.eigenvalues, d[:5] / 2, rtol=1e-12)


# -- kernel counting ---------------------------------------------------------------


def test_kernel_count_simple_gap():
    rep = _report([1e-13, 3e-13, 2e-12, 1.0, 1.2, 2.0, 2.5, 3.0, 4.0, 5.0])
    assert kernel_dimension(rep) == 3
    assert "UNSTABLE" not in rep.flags


def test_kernel_count_uses_last_big_gap():
    # an exact sub-kernel below approximate kernel vectors
    rep = _report([1e-9, 2e-9, 3e-9, 1e-3, 2e-3, 16.0, 16.1, 16.2, 144.0, 145.0, 146.0])
    assert kernel_dimension(rep) == 5


def test_kernel_count_without_gap_is_unstable():
    rep = _report(np.linspace(1.0, 2.0, 12))
    kernel_dimension(rep)
    assert "UNSTABLE" in rep.flags


def test_sphere_kernel_counts():
    for build, N, k, expect in ((sinjukov_S, 48, 16, 6), (eisenhart_E, 32, 20, 8)):
        P = normal_operator(build(build_round_sphere(N)))
        rep = solve_smallest(P.A, P.M, k)
        assert rep.kernel_count == expect
        assert rep.gap_ratio >= 50 and "UNSTABLE" not in rep.flags


# -- reference spectra ---------------------------------------------------------


def test_published_closed_forms():
    ref = dict(analytic_sphere_spectrum("EstarE", 2, 4))
    assert ref["exact_k2"] == 90 and ref["coexact_k2"] == 63
    assert ref["exact_k3"] == 144 and ref["coexact_k3"] == 117
    assert ref["KILLING_KERNEL"] == 0
    s = dict(analytic_sphere_spectrum("SstarS", 3, 2))
    assert s["trace_first"] == 3 and s["TT_k2"] == pytest.approx(8 / 3)
    with pytest.raises(ValueError):
        analytic_sphere_spectrum("XstarX", 2, 3)


def test_derived_spectrum_surface():
    d = {lab: (v, m) for lab, v, m in derived_sphere_spectrum(2, 4)}
    assert d["exact_k1"] == (16.0, 3)
    assert d["exact_k2"] == (0.0, 5)
    assert d["coexact_k1"] == (0.0, 3)
    assert d["coexact_k2"] == (144.0, 5)
    assert d["exact_k3"][0] == 576 and d["coexact_k3"][0] == 1440
    assert d["exact_k4"][0] == 2464 and d["coexact_k4"][0] == 5184


def test_derived_spectrum_kernel_dimension_any_n():
    # kernel = Killing (coexact k=1) + gradients of degree-2 harmonics
    for n in range(2, 6):
        d = {lab: (v, m) for lab, v, m in derived_sphere_spectrum(n, 3)}
        assert d["exact_k2"][0] == 0 and d["coexact_k1"][0] == 0
        assert d["exact_k1"][0] > 0 and d["coexact_k2"][0] > 0
        assert d["exact_k2"][1] + n * (n + 1) // 2 == n * (n + 2)


def test_clusters():
    cl = clusters([1.0, 1.01, 2.0, 2.02, 2.03, 5.0], rtol=0.02)
    assert [idx for _, idx in cl] == [[0, 1], [2, 3, 4], [5]]


def test_compare_to_reference_reports_unmatched():
    out = compare_to_reference([1.0, 1.0, 3.0, 3.01], [("a", 1.0), ("b", 2.0), ("c", 3.0, 2)])
    assert out["discrepancy"]
    assert [r["label"] for r in out["matched"]] == ["a", "c"]
    assert out["matched"][1]["multiplicity"] == 2
    assert out["unmatched_reference"][0]["label"] == "b"


def test_compare_branches_is_branch_aware():
    computed = {"exact": [16.0, 576.0], "coexact": [144.0]}
    ref = [("exact_k2", 90.0), ("exact_k3", 144.0), ("coexact_k2", 63.0), ("coexact_k3", 117.0)]
    out = compare_branches(computed, ref)
    rows = {r["label"]: r for r in out["rows"]}
    # 144 appears among the computed values but on the other branch
    assert not rows["exact_k3"]["agrees"]
    assert rows["coexact_k3"]["status"] == "UNMATCHED"
    assert out["discrepancy"]
    same = compare_branches(computed, [("exact_k1", 16.0), ("exact_k3", 576.0), ("coexact_k2", 144.0)])
    assert not same["discrepancy"]


def test_richardson_second_order():
    p, lim, noisy = richardson([1 + 0.4**2, 1 + 0.2**2, 1 + 0.1**2])
    assert p == pytest.approx(2.0) and lim == pytest.approx(1.0) and not noisy
    assert richardson([1.0, 1.0, 1.0])[2]


def test_convergence_study_rejects_bad_grids():
    with pytest.raises(ValueError):
        convergence_study([build_flat_torus(2, 8), build_flat_torus(2, 16)], "SstarS", 4)
    with pytest.raises(ValueError):
        convergence_study([build_flat_torus(2, N) for N in (8, 12, 16)], "SstarS", 4)


def test_convergence_study_torus_smallest_mode():
    # first nonzero torus cluster of E^*E; the constant-symbol limit is 10 for |m| = 1
    Ns = (16, 32, 64)
    out = convergence_study([build_flat_torus(2, N) for N in Ns], "EstarE", 8, track=[[2, 3, 4, 5]])
    row = out["rows"][0]
    oracle = [torus_fourier_spectrum(2, N, 2 * np.pi, "EstarE")[2:6].mean() for N in Ns]
    assert_allclose(row["values"], oracle, rtol=1e-9)
    assert row["order"] > 1.5
    assert row["limit"] == pytest.approx(10.0, rel=5e-3)
    assert out["h"][0] == pytest.approx(2 * np.pi / 16)


# -- splittings -------------------------------------------------------------------


def test_classify_torus_pure_parts():
    g = build_flat_torus(2, 16)
    x, y = g.nodes.T
    th = TensorField(g, ONE_FORM, np.stack([np.sin(x + 2 * y), np.cos(3 * y)], axis=1))
    fr, _ = classify_sinjukov_eigentensor(g, delta_star(g).apply(th))
    assert fr["im_delta_star"] == pytest.approx(1.0, abs=1e-10)
    fr, _ = classify_sinjukov_eigentensor(g, metric_field(g))
    assert fr["trace"] == pytest.approx(1.0, abs=1e-10)


def test_classify_parts_orthogonal_and_sum():
    g = build_round_sphere(16)
    fr, parts = classify_sinjukov_eigentensor(g, random_field(g, SYM2, 11))
    assert sum(fr.values()) == pytest.approx(1.0, abs=1e-10)
    from projlab.fields import l2_inner, l2_norm

    names = list(parts)
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = parts[names[i]], parts[names[j]]
            assert abs(l2_inner(a, b)) <= 1e-8 * (l2_norm(a) * l2_norm(b) + 1e-30) + 1e-12


def test_hodge_split_sphere():
    g = build_round_sphere(16)
    th, ph = g.nodes.T
    dz = np.stack([-np.sin(th), 0 * th], axis=1)
    kill = np.stack([0 * th, np.sin(th) ** 2], axis=1)
    vz = TensorField(g, ONE_FORM, dz).vector()
    vk = TensorField(g, ONE_FORM, kill).vector()
    assert exact_fraction(g, vz) > 0.999
    assert exact_fraction(g, vk) < 1e-3
    out = hodge_split(g, np.column_stack([vz, vk]))
    assert (out["exact"], out["coexact"]) == (1, 1)


# -- report output ------------------------------------------------------------------


def test_report_json_and_csv(tmp_path):
    rep = SpectrumReport("SstarS", {"kind": "torus"}, np.array([0.0, 1.0, 1.0]), np.array([1e-14, 1e-13, 2e-13]),
                         reference_values=[{"label": "k1", "reference": 1.0, "rel_error": 0.0, "indices": [1, 2]}])
    d = json.loads(rep.to_json(tmp_path / "r.json"))
    assert d["eigenvalues"] == [0.0, 1.0, 1.0]
    assert json.loads((tmp_path / "r.json").read_text()) == d
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "index,eigenvalue,residual,reference_label,reference_value,rel_error"
    assert lines[1].endswith(",,,") and ",k1," in lines[2]
