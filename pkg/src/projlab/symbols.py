"""Principal symbols of S and E as dense matrices, and injectivity checks.

Symbols act on stored components (see :mod:`projlab.fields`) and omit the
customary factor ``i`` (resp. ``i^2``), keeping only the algebraic part.
Singular values are always taken in the metric-induced inner products, so
they do not depend on how symmetric components are stored.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidMetric
from .fields import COV1_SYM2, ONE_FORM, SYM2, _full_gram, compression, expansion

__all__ = [
    "SymbolMap",
    "sigma_S",
    "sigma_E",
    "sigma_EstarE_check",
    "injectivity_certificate",
    "symbol_gram",
    "weighted_singular_values",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class SymbolMap:
    n: int
    covector: np.ndarray
    matrix: np.ndarray
    operator_tag: str


def _check_metric(n, g):
    if n < 2:
        raise ValueError("symbols need n >= 2")
    g = np.eye(n) if g is None else np.asarray(g, dtype=float)
    if g.shape != (n, n) or not np.allclose(g, g.T):
        raise InvalidMetric("metric must be a symmetric n x n matrix")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise InvalidMetric("metric is not positive definite")
    return g


def _covector(v):
    # complex covectors are allowed: the torus oracle feeds modified wavenumbers
    v = np.asarray(v)
    return v.astype(complex) if np.iscomplexobj(v) else v.astype(float)


def symbol_gram(valence, n, g):
    """Gram matrix of the metric inner product on stored components at one point."""
    P = expansion(valence, n)
    G = _full_gram(np.linalg.inv(g)[None], valence.rank)[0]
    return P.T @ G @ P


def sigma_S(n, theta, g=None):
    """``theta_k phi_ij - (g_ki theta^l phi_lj + g_kj theta^l phi_li)/(n+1)``."""
    g = _check_metric(n, g)
    th = _covector(theta)
    up = np.linalg.solve(g, th)
    eye = np.eye(n)
    # full map T[k, i, j, a, b] acting on phi_ab
    T = np.einsum("k,ia,jb->kijab", th, eye, eye)
    c = np.einsum("ki,l,la,jb->kijab", g, up, eye, eye)
    T = T - (c + np.swapaxes(c, 1, 2)) / (n + 1)
    F = T.reshape(n**3, n**2)
    mat = compression(COV1_SYM2, n) @ F @ expansion(SYM2, n)
    return SymbolMap(n, th, mat, "S")


def sigma_E(n, omega, g=None):
    """``(n+1) w_k (w_i t_j + w_j t_i) - 2 g_ij w_k (w.t) - g_kj w_i (w.t) - g_ki w_j (w.t)``."""
    g = _check_metric(n, g)
    w = _covector(omega)
    up = np.linalg.solve(g, w)
    eye = np.eye(n)
    a = np.einsum("k,i,ja->kija", w, w, eye)
    T = (n + 1) * (a + np.swapaxes(a, 1, 2))
    T -= 2 * np.einsum("ij,k,a->kija", g, w, up)
    b = np.einsum("kj,i,a->kija", g, w, up)
    T -= b + np.swapaxes(b, 1, 2)
    mat = compression(COV1_SYM2, n) @ T.reshape(n**3, n)
    return SymbolMap(n, w, mat, "E")


def weighted_singular_values(sym, g=None):
    """Singular values of a symbol between the metric-weighted component spaces."""
    n = sym.n
    g = np.eye(n) if g is None else np.asarray(g, dtype=float)
    dom = SYM2 if sym.operator_tag == "S" else ONE_FORM
    Gc = symbol_gram(COV1_SYM2, n, g)
    Gd = symbol_gram(dom, n, g)
    Lc = np.linalg.cholesky(Gc)
    Ld = np.linalg.cholesky(Gd)
    W = Lc.T @ sym.matrix @ np.linalg.inv(Ld.T)
    return np.linalg.svd(W, compute_uv=False)


def sigma_EstarE_check(n, xi, g=None, return_record=False):
    """Compare ``sigma_E^T G sigma_E`` with ``4 (n+1)^2 |xi|^4 G_1``.

    Returns the spectral norm of the difference, taken in a metric-orthonormal
    frame on one-forms, divided by ``4 (n+1)^2 |xi|^4`` (0 when both vanish).
    Unlike a largest-entry measure this is invariant under isometries. With
    ``return_record=True`` also returns a dict holding both matrices when the
    deviation exceeds ``1e-10``.
    """
    g = _check_metric(n, g)
    xi = np.asarray(xi, dtype=float)
    sE = sigma_E(n, xi, g).matrix
    lhs = sE.T @ symbol_gram(COV1_SYM2, n, g) @ sE
    norm2 = xi @ np.linalg.solve(g, xi)
    rhs = 4 * (n + 1) ** 2 * norm2**2 * symbol_gram(ONE_FORM, n, g)
    scale = 4 * (n + 1) ** 2 * norm2**2
    L = np.linalg.cholesky(symbol_gram(ONE_FORM, n, g))
    Li = np.linalg.inv(L)
    diff = Li @ (lhs - rhs) @ Li.T
    dev = 0.0 if scale == 0 else float(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.T))).max() / scale)
    if not return_record:
        return dev
    record = None
    if dev > 1e-10:
        record = {
            "n": n,
            "xi": xi.tolist(),
            "deviation": dev,
            "computed": lhs.tolist(),
            "claimed": rhs.tolist(),
            "computed_eigenvalues_over_xi4": (np.linalg.eigvalsh(np.linalg.solve(
                symbol_gram(ONE_FORM, n, g), lhs)) / norm2**2).tolist() if norm2 else [],
        }
    return dev, record


def injectivity_certificate(tag, n, trials=100, seed=0):
    """Minimum weighted singular value of ``sigma_S`` or ``sigma_E`` over unit covectors.

    The sample is ``trials`` random unit covectors plus the coordinate axes.
    A sample is flagged when its smallest singular value is below ``1e-10``
    times its largest.
    """
    if tag not in ("S", "E"):
        raise ValueError(f"unknown symbol tag {tag!r}")
    if n < 2:
        raise ValueError("injectivity needs n >= 2; for n = 1 the symbol argument degenerates")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    vecs = rng.standard_normal((trials, n))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    vecs = np.vstack([vecs, np.eye(n)])
    build = sigma_S if tag == "S" else sigma_E
    smin, flagged = np.inf, False
    for v in vecs:
        s = weighted_singular_values(build(n, v))
        smin = min(smin, s[-1])
        flagged |= bool(s[-1] < RANK_TOL * s[0])
    return {"tag": tag, "n": n, "trials": trials, "min_singular_value": float(smin), "flagged": flagged}


def certificate_json(report):
    return json.dumps(report, indent=2, sort_keys=True)
