"""Generalised eigenproblems for the normal operators and their analysis.

Pencils ``A x = mu M x`` come from :func:`projlab.operators.normal_operator`.
Besides the solvers this module holds the reference spectra (the published
closed forms and independently derived ones), the Fourier oracle for the
torus assemblies, the orthogonal splittings used to classify eigentensors
and a Richardson convergence study.
"""
from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError
from .fields import COV1_SYM2, ONE_FORM, SCALAR, SYM2, TensorField, gram
from .symbols import sigma_E, sigma_S, symbol_gram

__all__ = [
    "SpectrumReport",
    "solve_smallest",
    "kernel_dimension",
    "analytic_sphere_spectrum",
    "derived_sphere_spectrum",
    "compare_to_reference",
    "compare_branches",
    "clusters",
    "classify_sinjukov_eigentensor",
    "hodge_split",
    "exact_fraction",
    "torus_fourier_oracle",
    "torus_fourier_spectrum",
    "convergence_study",
    "richardson",
]

DENSE_LIMIT = 4000
GAP_RATIO = 50.0


@dataclass
class SpectrumReport:
    """Smallest eigenpairs of a pencil plus kernel diagnostics."""

    operator_tag: str
    geometry: dict
    eigenvalues: np.ndarray
    residuals: np.ndarray
    kernel_count: int = 0
    gap_ratio: float = float("nan")
    flags: list = field(default_factory=list)
    reference_values: list = None
    scale: float = 1.0
    eigenvectors: np.ndarray = field(default=None, repr=False)

    def as_dict(self):
        return {
            "operator_tag": self.operator_tag,
            "geometry": self.geometry,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
            "kernel_count": int(self.kernel_count),
            "gap_ratio": float(self.gap_ratio),
            "flags": list(self.flags),
            "reference_values": self.reference_values,
            "scale": float(self.scale),
        }

    def to_json(self, path=None):
        text = json.dumps(self.as_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def to_csv(self, path):
        """Columns: index, eigenvalue, residual, reference_label, reference_value, rel_error."""
        refs = {}
        for row in self.reference_values or []:
            for i in row.get("indices", []):
                refs[i] = row
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eigenvalue", "residual", "reference_label", "reference_value", "rel_error"])
            for i, (mu, r) in enumerate(zip(self.eigenvalues, self.residuals)):
                ref = refs.get(i)
                if ref is None:
                    w.writerow([i, repr(float(mu)), repr(float(r)), "", "", ""])
                else:
                    w.writerow([i, repr(float(mu)), repr(float(r)), ref["label"],
                                repr(float(ref["reference"])), repr(float(ref["rel_error"]))])


def _scale(A, M):
    """Rough size of the spectrum: largest diagonal ratio of the pencil."""
    d = A.diagonal() / M.diagonal()
    return float(np.abs(d).max()) or 1.0


def _residuals(A, M, vals, vecs, scale):
    R = A @ vecs - (M @ vecs) * vals
    num = np.linalg.norm(R, axis=0)
    den = scale * np.linalg.norm(M @ vecs, axis=0)
    return num / np.where(den > 0, den, 1.0)


def _shift_invert(A, M, k, sigma):
    Ac = sp.csc_matrix(A - sigma * M)
    lu = spla.splu(Ac)
    if not np.all(np.isfinite(lu.U.diagonal())) or np.any(lu.U.diagonal() == 0):
        raise RuntimeError("singular factor")
    op = spla.LinearOperator(A.shape, matvec=lu.solve, dtype=float)
    # fixed start vector: the kernel basis, and what is built from it, is reproducible
    v0 = np.random.default_rng(0).standard_normal(A.shape[0])
    vals, vecs = spla.eigsh(A, k=k, M=sp.csc_matrix(M), sigma=sigma, which="LM", OPinv=op, tol=1e-12, v0=v0)
    return vals, vecs


def solve_smallest(A, M, k, mode="auto", operator_tag="", geometry=None):
    """The ``k`` smallest eigenpairs of ``A x = mu M x``.

    ``mode`` is ``"dense"``, ``"shift_invert"`` or ``"auto"`` (dense up to
    4000 unknowns). Shift-invert factorises at shift ``-1`` and falls back
    to ``-1e-8 * scale``. A shift of exactly 0 is avoided: on fine sphere
    grids the pencil is nearly singular there and the factorisation error
    leaks into the non-kernel eigenvalues.
    """
    dim = A.shape[0]
    if not 1 <= k <= max(1, dim // 4):
        raise ValueError(f"k = {k} must lie in [1, dim/4] for dim {dim}")
    scale = _scale(A, M)
    if mode == "auto":
        mode = "dense" if dim <= DENSE_LIMIT else "shift_invert"
    if mode == "dense":
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        Ad = 0.5 * (Ad + Ad.T)
        try:
            vals, vecs = sla.eigh(Ad, Md, subset_by_index=[0, k - 1])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"dense eigensolver failed: {exc}") from exc
    elif mode == "shift_invert":
        A = sp.csr_matrix(A)
        A = 0.5 * (A + A.T)
        vals = None
        for sigma in (-1.0, -1e-8 * scale):
            try:
                vals, vecs = _shift_invert(A, M, k, sigma)
                break
            except (RuntimeError, spla.ArpackError, spla.ArpackNoConvergence):
                continue
        if vals is None:
            raise SolverError("shift-invert failed at shifts -1 and -1e-8*scale")
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    res = _residuals(A, M, vals, vecs, scale)
    rep = SpectrumReport(
        operator_tag=operator_tag,
        geometry=geometry or {},
        eigenvalues=np.asarray(vals),
        residuals=res,
        scale=scale,
        eigenvectors=vecs,
    )
    if np.any(vals < -1e-10 * scale):
        rep.flags.append("NEGATIVE")
    if np.any(res > 1e-8):
        rep.flags.append("RESIDUAL")
    kernel_dimension(rep)
    return rep


def kernel_dimension(report):
    """Count kernel eigenvalues by a spectral gap.

    The kernel edge is the last gap ``mu_c / mu_{c-1} >= 50`` in the sample
    (the largest ratio if there is none). The last one rather than the
    largest: discretely exact kernel vectors, such as Killing fields, can
    sit orders of magnitude below the approximate ones and open a bigger
    gap inside the kernel. Values are floored at ``1e-12`` times the largest
    computed eigenvalue. The threshold is the geometric mean across the
    gap; the count is re-taken at half the threshold and a different count,
    or a gap ratio below 50, flags the report ``UNSTABLE``.
    """
    mu = np.asarray(report.eigenvalues, dtype=float)
    floor = 1e-12 * max(float(np.abs(mu).max()), 1e-300)
    v = np.maximum(mu, floor)
    if len(v) < 2:
        report.kernel_count, report.gap_ratio = 0, float("nan")
        report.flags.append("UNSTABLE")
        return 0
    # the last few values are excluded: the gap must be seen inside the sample
    upto = max(1, len(v) - 4) if len(v) > 5 else len(v) - 1
    ratios = v[1 : upto + 1] / v[:upto]
    big = np.flatnonzero(ratios >= GAP_RATIO)
    c = int(big[-1] if big.size else np.argmax(ratios)) + 1
    tau = float(np.sqrt(v[c - 1] * v[c]))
    count = int(np.sum(mu < tau))
    count_half = int(np.sum(mu < tau / 2))
    report.kernel_count = count
    report.gap_ratio = float(ratios[c - 1])
    report.flags = [f for f in report.flags if f != "UNSTABLE"]
    if report.gap_ratio < GAP_RATIO or count != count_half:
        report.flags.append("UNSTABLE")
    return count


# --------------------------------------------------------------------------
# reference spectra


def analytic_sphere_spectrum(operator_tag, n, k_max):
    """Published closed forms for the round unit sphere, labelled by branch.

    ``operator_tag`` is ``"SstarS"`` or ``"EstarE"``. For ``EstarE`` the
    exact branch ``(n+1)^2 (k(k+n-1) + 2n)`` and the coexact branch
    ``(n+1)^2 ((k+1)(k+n-2) + 1)`` are emitted for ``k >= 2``; degree-one
    coexact forms are Killing and appear as ``KILLING_KERNEL`` with value 0.
    """
    if n < 2 or k_max < 2:
        raise ValueError("need n >= 2 and k_max >= 2")
    out = []
    if operator_tag == "SstarS":
        out.append(("trace_first", float(n)))
        for k in range(1, k_max + 1):
            mu = k * (n + k - 1) / n
            out.append((f"im_delta_star_k{k}", mu))
            out.append((f"TT_k{k}", mu))
    elif operator_tag == "EstarE":
        out.append(("KILLING_KERNEL", 0.0))
        for k in range(2, k_max + 1):
            out.append((f"exact_k{k}", float((n + 1) ** 2 * (k * (k + n - 1) + 2 * n))))
            out.append((f"coexact_k{k}", float((n + 1) ** 2 * ((k + 1) * (k + n - 2) + 1))))
    else:
        raise ValueError(f"unknown operator tag {operator_tag!r}")
    return out


def published_coexact_k1(n):
    """The coexact closed form evaluated at ``k = 1`` (nonzero, see the ledger)."""
    return float((n + 1) ** 2 * (2 * (n - 1) + 1))


def derived_sphere_spectrum(n, k_max):
    """``E^*E`` eigenvalues on the unit ``S^n`` from the Weitzenbock identities.

    For a Hodge eigenform with eigenvalue ``lam``, ``Delta_L delta^* = delta^* Delta_H``
    and ``2 delta delta^* = Delta_H - 2 Ric + d delta`` give

    * exact, ``lam = k(k+n-1)``:
      ``4(n+1)^2 [(lam-2n)(lam-n+1) + 2 lam] + 8(n+1) lam (n-1-2 lam) + (6n+10) lam^2``
    * coexact, ``lam = (k+1)(k+n-2)``: ``2 (n+1)^2 (lam-2n)(lam-2n+2)``

    Returns ``(label, value, multiplicity)`` triples; for ``n = 2`` both
    branches have multiplicity ``2k + 1``.
    """
    out = []
    for k in range(1, k_max + 1):
        lam = k * (k + n - 1)
        mu = (4 * (n + 1) ** 2 * ((lam - 2 * n) * (lam - n + 1) + 2 * lam)
              + 8 * (n + 1) * lam * (n - 1 - 2 * lam) + (6 * n + 10) * lam**2)
        out.append((f"exact_k{k}", float(mu), _harmonic_mult(n, k)))
        lam = (k + 1) * (k + n - 2)
        mu = 2 * (n + 1) ** 2 * (lam - 2 * n) * (lam - 2 * n + 2)
        out.append((f"coexact_k{k}", float(mu), _coexact_mult(n, k)))
    return out


def _harmonic_mult(n, k):
    # dimension of degree-k spherical harmonics on S^n
    from math import comb

    return comb(n + k, n) - comb(n + k - 2, n)


def _coexact_mult(n, k):
    # only the surface case is needed; higher n is left unspecified
    return 2 * k + 1 if n == 2 else None


def clusters(eigenvalues, rtol=0.02, atol=0.0):
    """Group ascending eigenvalues whose neighbours differ by at most ``rtol`` relatively."""
    mu = np.asarray(eigenvalues, dtype=float)
    groups = []
    for i, v in enumerate(mu):
        if groups and abs(v - mu[groups[-1][-1]]) <= rtol * max(abs(v), 1e-300) + atol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return [(float(mu[g].mean()), g) for g in groups]


def compare_to_reference(eigenvalues, reference, rtol=0.03, cluster_rtol=0.02, atol=0.0):
    """Greedy matching of computed clusters to reference values.

    ``reference`` is a list of ``(label, value)`` or ``(label, value, multiplicity)``.
    Never raises on disagreement; returns matched rows plus both kinds of
    ``UNMATCHED`` entries.
    """
    cl = clusters(eigenvalues, cluster_rtol, atol) if len(eigenvalues) else []
    used = set()
    matched, unmatched_ref = [], []
    for ref in sorted(reference, key=lambda r: r[1]):
        label, value = ref[0], float(ref[1])
        best, err = None, np.inf
        for j, (c, idx) in enumerate(cl):
            if j in used:
                continue
            e = abs(c - value) / max(abs(value), 1e-300) if value != 0 else abs(c)
            if e < err:
                best, err = j, e
        tol = rtol if value != 0 else max(atol, 1e-300)
        if best is not None and err <= tol:
            used.add(best)
            c, idx = cl[best]
            row = {"label": label, "reference": value, "computed": c, "rel_error": float(err),
                   "indices": list(map(int, idx)), "multiplicity": len(idx)}
            if len(ref) > 2:
                row["expected_multiplicity"] = int(ref[2])
            matched.append(row)
        else:
            unmatched_ref.append({"label": label, "reference": value, "status": "UNMATCHED",
                                  "nearest": None if best is None else cl[best][0]})
    unmatched_comp = [{"computed": c, "indices": list(map(int, idx)), "status": "UNMATCHED"}
                      for j, (c, idx) in enumerate(cl) if j not in used]
    errs = [m["rel_error"] for m in matched]
    return {
        "matched": matched,
        "unmatched_reference": unmatched_ref,
        "unmatched_computed": unmatched_comp,
        "max_rel_error": float(max(errs)) if errs else float("nan"),
        "discrepancy": bool(unmatched_ref),
    }


def compare_branches(computed, reference, rtol=0.03):
    """Pair computed clusters with reference values branch by branch.

    ``computed`` maps a branch name (``"exact"``, ``"coexact"``) to its
    non-kernel cluster values in ascending order; ``reference`` holds
    ``(label, value)`` pairs whose labels start with the branch name.
    The i-th reference of a branch is paired with the i-th computed
    cluster of that branch.
    """
    rows = []
    for branch, values in computed.items():
        refs = sorted((v, lab) for lab, v, *_ in reference if lab.split("_")[0] == branch and v > 0)
        for i, (ref, lab) in enumerate(refs):
            if i < len(values):
                err = abs(values[i] - ref) / abs(values[i])
                rows.append({"label": lab, "reference": ref, "computed": float(values[i]),
                             "rel_error": float(err), "agrees": bool(err <= rtol)})
            else:
                rows.append({"label": lab, "reference": ref, "computed": None,
                             "rel_error": None, "agrees": False, "status": "UNMATCHED"})
    return {"rows": rows, "discrepancy": not all(r["agrees"] for r in rows), "rtol": rtol}


# --------------------------------------------------------------------------
# orthogonal splittings


def _mass_sqrt(grid, valence):
    """Sparse ``R`` with ``R^T R`` equal to the mass matrix."""
    from .operators import pointwise

    G = gram(grid, valence) * grid.quad_weights[:, None, None]
    L = np.linalg.cholesky(G)
    return pointwise(np.swapaxes(L, 1, 2))


def _project(R, B, y, what):
    """Least-squares coefficients of ``y`` on the columns of ``B`` in the ``R^T R`` inner product."""
    dim = B.shape[1]
    RB = (R @ B).tocsc()
    # unit columns: the polar weights otherwise spread column norms over
    # many decades and LSQR stalls
    cn = np.sqrt(np.asarray(RB.multiply(RB).sum(axis=0)).ravel())
    cs = 1.0 / np.where(cn > 0, cn, 1.0)
    RB = (RB @ sp.diags(cs)).tocsr()
    rhs = R @ y
    x = np.zeros(dim)
    # the default condition limit stops LSQR near 1e-8 on the sphere; with
    # it lifted, one refinement sweep on the residual reaches rounding level
    for _ in range(2):
        out = spla.lsqr(RB, rhs - RB @ x, atol=1e-15, btol=1e-15, conlim=1e20, iter_lim=10 * dim)
        if out[1] == 7:
            raise SolverError(f"{what}: least squares did not converge in {10 * dim} iterations")
        x = x + out[0]
    return cs * x


def classify_sinjukov_eigentensor(grid, phi):
    """Energy fractions of ``phi`` in ``(C g, Im delta^*, TT)``.

    Computed by orthogonal projections in the discrete ``L^2`` product:
    ``im`` is the projection onto ``Im delta^*``, ``trace`` the rest of the
    projection onto ``Im delta^* + C^infty g`` and ``TT`` the remainder, so
    the three parts are mutually orthogonal and the fractions sum to 1.
    """
    from .operators import delta_star, mass_matrix

    if phi.valence.symmetry != "sym2":
        raise ValueError("classification needs a sym2 field")
    y = phi.vector()
    R = _mass_sqrt(grid, SYM2)
    Ds = delta_star(grid).principal
    N = grid.n_nodes
    Gmap = sp.csr_matrix(
        (np.concatenate([grid.metric[:, i, j] for (i, j) in _sym_pairs(grid.dim)]),
         (np.concatenate([c * N + np.arange(N) for c in range(len(_sym_pairs(grid.dim)))]),
          np.tile(np.arange(N), len(_sym_pairs(grid.dim))))),
        shape=(y.size, N),
    )
    a = _project(R, Ds, y, "Im delta*")
    im = Ds @ a
    W = sp.hstack([Ds, Gmap], format="csr")
    b = _project(R, W, y, "Im delta* + C g")
    pw = W @ b
    trace = pw - im
    tt = y - pw
    M = mass_matrix(grid, SYM2)
    tot = float(y @ (M @ y))
    parts = {"trace": trace, "im_delta_star": im, "TT": tt}
    fr = {k: float(v @ (M @ v)) / tot for k, v in parts.items()}
    fields_ = {k: TensorField.from_vector(grid, SYM2, v) for k, v in parts.items()}
    return fr, fields_


def _sym_pairs(n):
    return [(i, j) for i in range(n) for j in range(i, n)]


def hodge_split(grid, vectors):
    """Exact/coexact splitting of a set of one-form vectors.

    ``vectors`` are columns (need not be orthonormal). Returns the number of
    exact and coexact directions of their span: the eigenvalues of the
    compressed projector onto ``Im d`` are rounded at 1/2.
    """
    from .operators import mass_matrix, nabla_chart

    V = np.atleast_2d(np.asarray(vectors))
    if V.shape[0] != ONE_FORM.n_components(grid.dim) * grid.n_nodes:
        V = V.T
    M = mass_matrix(grid, ONE_FORM)
    # M-orthonormalise the span
    Gm = V.T @ (M @ V)
    w, U = np.linalg.eigh(Gm)
    keep = w > 1e-12 * w.max()
    Q = V @ (U[:, keep] / np.sqrt(w[keep]))
    d = nabla_chart(grid, 0, "c")
    R = _mass_sqrt(grid, ONE_FORM)
    PQ = np.column_stack([d @ _project(R, d, Q[:, j], "Im d") for j in range(Q.shape[1])])
    C = Q.T @ (M @ PQ)
    ev = np.linalg.eigvalsh(0.5 * (C + C.T))
    n_exact = int(np.sum(ev > 0.5))
    return {"exact": n_exact, "coexact": int(Q.shape[1] - n_exact), "projector_eigenvalues": ev.tolist()}


def exact_fraction(grid, vec):
    """Share of the ``L^2`` energy of a one-form lying in ``Im d``."""
    from .operators import mass_matrix, nabla_chart

    M = mass_matrix(grid, ONE_FORM)
    d = nabla_chart(grid, 0, "c")
    p = d @ _project(_mass_sqrt(grid, ONE_FORM), d, vec, "Im d")
    return float(p @ (M @ p)) / float(vec @ (M @ vec))


# --------------------------------------------------------------------------
# torus Fourier oracle


def _one_sided(m, h):
    fwd = (np.exp(1j * m * h) - 1) / h
    bwd = (1 - np.exp(-1j * m * h)) / h
    return fwd, bwd


def torus_fourier_oracle(n, N, L, operator_tag, m):
    """Eigenvalues of the assembled normal operator restricted to wavevector ``m``.

    Difference operators act on ``exp(i m.x 2pi/L)`` by multiplication:
    forward/backward differences by ``(e^{i m h}-1)/h``, ``(1-e^{-i m h})/h``,
    centred ones by ``i sin(m h)/h``. The stacked factor is formed from the
    symbols of :mod:`projlab.symbols` at these complex covectors.
    """
    m = np.asarray(m, dtype=float)
    if np.any(np.abs(m) > N / 2):
        raise ValueError("|m_j| must not exceed N/2")
    h = L / N
    k = 2 * np.pi * m / L
    g = np.eye(n)
    if operator_tag in ("SstarS", "S"):
        fwd, bwd = _one_sided(k, h)
        G = symbol_gram(COV1_SYM2, n, g)
        sp_, sm = sigma_S(n, fwd).matrix, sigma_S(n, bwd).matrix
        H = 0.5 * (sp_.conj().T @ G @ sp_ + sm.conj().T @ G @ sm)
        Gd = symbol_gram(SYM2, n, g)
    elif operator_tag in ("EstarE", "E"):
        xi = 1j * np.sin(k * h) / h
        s = sigma_E(n, xi).matrix
        G = symbol_gram(COV1_SYM2, n, g)
        H = s.conj().T @ G @ s
        stab = 2 * (n + 1) * (2 * np.cos(k * h) - 2) ** 2 / h
        H = H + np.sum(stab**2) * np.eye(n)
        Gd = symbol_gram(ONE_FORM, n, g)
    elif operator_tag in ("delta_star",):
        fwd, bwd = _one_sided(k, h)
        G = symbol_gram(SYM2, n, g)
        H = 0
        for z in (fwd, bwd):
            D = np.zeros((len(_sym_pairs(n)), n), dtype=complex)
            for r, (i, j) in enumerate(_sym_pairs(n)):
                D[r, j] += z[i] / 2
                D[r, i] += z[j] / 2
            H = H + 0.5 * D.conj().T @ G @ D
        Gd = symbol_gram(ONE_FORM, n, g)
    else:
        raise ValueError(f"unknown operator tag {operator_tag!r}")
    H = 0.5 * (H + H.conj().T)
    return np.sort(sla.eigh(H, Gd, eigvals_only=True).real)


def torus_fourier_spectrum(n, N, L, operator_tag):
    """All ``N^n`` modes of :func:`torus_fourier_oracle`, sorted."""
    vals = []
    for m in itertools.product(range(-N // 2 + 1, N // 2 + 1), repeat=n):
        vals.extend(torus_fourier_oracle(n, N, L, operator_tag, m))
    return np.sort(np.array(vals))


# --------------------------------------------------------------------------
# convergence


def richardson(values):
    """Order and extrapolated limit from three values at ``h, h/2, h/4``."""
    a, b, c = values
    d1, d2 = b - a, c - b
    noisy = d1 == 0 or d2 == 0 or np.sign(d1) != np.sign(d2) or abs(d2) > abs(d1)
    if d1 == 0 or d2 == 0:
        return float("nan"), float(c), True
    p = float(np.log2(abs(d1) / abs(d2)))
    limit = c + d2 / (2**p - 1) if p > 0 else c
    return p, float(limit), bool(noisy)


def convergence_study(grids, operator_tag, k, track=None, mode="auto"):
    """Richardson analysis of tracked eigenvalues over refined grids.

    ``grids`` must contain at least three grids whose resolution doubles.
    ``track`` selects eigenvalue indices (default: all ``k``); clusters may be
    tracked by passing lists of indices, whose mean is used.
    """
    from .operators import eisenhart_E, normal_operator, sinjukov_S

    if len(grids) < 3:
        raise ValueError("convergence study needs at least three resolutions")
    hs = [g.h for g in grids]
    ratios = np.array(hs[:-1]) / np.array(hs[1:])
    if not np.allclose(ratios, 2.0, rtol=1e-9):
        raise ValueError("resolutions must form a geometric progression with ratio 2")
    build = {"SstarS": sinjukov_S, "EstarE": eisenhart_E}[operator_tag]
    spectra = []
    for g in grids:
        P = normal_operator(build(g))
        spectra.append(solve_smallest(P.A, P.M, k, mode=mode, operator_tag=operator_tag).eigenvalues)
    track = list(range(k)) if track is None else track
    rows = []
    for t in track:
        idx = [t] if np.isscalar(t) else list(t)
        vals = [float(np.mean(s[idx])) for s in spectra]
        out = {"indices": idx, "values": vals}
        if len(vals) >= 3:
            p, lim, noisy = richardson(vals[-3:])
            out.update(order=p, limit=lim, flags=["NOISY"] if noisy else [])
        rows.append(out)
    return {"operator_tag": operator_tag, "h": hs, "rows": rows, "spectra": [s.tolist() for s in spectra]}
