"""Projectively related metrics from Sinjukov-kernel tensors, and geodesics.

Given a symmetric tensor ``phi`` in the kernel of ``S``, the metric::

    gbar_ij = exp(2 rho) phi^{kl} g_ki g_lj,     d rho_i = -omega_k phi^{kl} g_li,

with ``omega = div(phi) / (n+1)`` and ``phi^{kl}`` the matrix inverse of
``phi_kl``, has the same unparametrised geodesics as ``g``. ``rho`` is found by
least squares, and the size of the non-exact part of the target 1-form is
reported as a closedness residual.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateTensor, InvalidCurve, NonIntegrable, PoleProximity, SolverError
from .fields import ONE_FORM, SYM2, TensorField, l2_norm
from .geometry import christoffels_from_metric

__all__ = [
    "ReconstructionResult",
    "reconstruct_projective_metric",
    "Curve",
    "geodesic_integrate",
    "geodesic_residual_profile",
    "unparametrized_geodesic_residual",
    "random_sphere_geodesic_starts",
]


@dataclass(frozen=True, eq=False)
class ReconstructionResult:
    gbar: np.ndarray
    rho: np.ndarray
    omega: TensorField
    closedness_residual: float
    alpha_norm: float
    kernel_residual: float

    def summary(self):
        g = self.omega.grid
        ev = np.linalg.eigvalsh(self.gbar)
        return {
            "grid_hash": g.grid_hash,
            "closedness_residual": self.closedness_residual,
            "alpha_norm": self.alpha_norm,
            "kernel_residual": self.kernel_residual,
            "rho_range": [float(self.rho.min()), float(self.rho.max())],
            "gbar_min_eigenvalue": float(ev.min()),
        }

    def to_json(self, path=None):
        text = json.dumps(self.summary(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def reconstruct_projective_metric(grid, phi, integrability_tol=None):
    """Build ``gbar`` from a ``sym2`` field in (approximately) the kernel of ``S``.

    Raises
    ------
    DegenerateTensor
        If ``|det(g^{-1} phi)| < 1e-6`` at some node, or if the determinant
        changes sign between nodes (the continuous field then degenerates
        somewhere in between).
    NonIntegrable
        If the non-exact part of the target 1-form exceeds
        ``integrability_tol`` times its norm. The default is
        ``max(1e-3, 4 h^2)``: a computed kernel element satisfies the kernel
        equation only to ``O(h^2)``, and so does the closedness of the target.
    """
    from .operators import delta_div, nabla_chart, sinjukov_S
    from .spectral import _mass_sqrt

    if phi.valence.symmetry != "sym2":
        raise DegenerateTensor("reconstruction needs a sym2 field")
    F = phi.full()
    g, ginv = grid.metric, grid.metric_inv
    rel = ginv @ F
    det = np.linalg.det(rel)
    if np.any(np.abs(det) < 1e-6) or not np.all(np.isfinite(det)):
        raise DegenerateTensor("phi is degenerate relative to g at some node")
    if det.min() < 0 < det.max():
        raise DegenerateTensor("det(g^-1 phi) changes sign, so phi degenerates between nodes")
    if integrability_tol is None:
        integrability_tol = max(1e-3, 4 * grid.h**2)
    n = grid.dim
    # omega = div(phi)/(n+1) = -delta(phi)/(n+1), with the centred divergence
    omega_vec = -(delta_div(grid, SYM2, "formula").matrix @ phi.vector()) / (n + 1)
    omega = TensorField.from_vector(grid, ONE_FORM, omega_vec)
    Finv = np.linalg.inv(F)
    alpha = -np.einsum("xk,xkl,xli->xi", omega.components, Finv, g)
    a_vec = TensorField(grid, ONE_FORM, alpha).vector()
    d = nabla_chart(grid, 0, "c")
    R = _mass_sqrt(grid, ONE_FORM)
    dim = d.shape[1]
    # the centred gradient nearly annihilates checkerboards; the half
    # difference of the one-sided gradients, with target 0, pins them down
    stab = 0.5 * (nabla_chart(grid, 0, "+") - nabla_chart(grid, 0, "-"))
    Ast = sp.vstack([R @ d, R @ stab], format="csr")
    b = np.concatenate([R @ a_vec, np.zeros(R.shape[0])])
    out = spla.lsqr(Ast, b, atol=1e-14, btol=1e-14, iter_lim=10 * dim)
    if out[1] == 7:
        raise SolverError("least-squares solve for rho did not converge")
    rho = out[0]
    w = grid.quad_weights
    rho = rho - np.sum(w * rho) / np.sum(w)
    resid = float(np.linalg.norm(R @ (d @ rho - a_vec)))
    anorm = float(np.linalg.norm(R @ a_vec))
    if anorm > 0 and resid > integrability_tol * anorm:
        raise NonIntegrable(
            f"closedness residual {resid:.3e} exceeds {integrability_tol:g} x |alpha| = {integrability_tol * anorm:.3e}"
        )
    gbar = np.exp(2 * rho)[:, None, None] * (g @ Finv @ g)
    gbar = 0.5 * (gbar + np.swapaxes(gbar, 1, 2))
    S = sinjukov_S(grid)
    kres = l2_norm(S.apply(phi)) / max(l2_norm(phi), 1e-300)
    return ReconstructionResult(gbar, rho, omega, resid, anorm, float(kres))


# --------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True, eq=False)
class Curve:
    """Samples of a curve in chart coordinates with velocities."""

    grid: object
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray

    def to_csv(self, path, residual=None):
        """Columns: arclength, chart coordinates, residual (blank if not given)."""
        s = arclength(self)
        n = self.x.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["arclength"] + [f"x{a}" for a in range(n)] + ["residual"])
            for i in range(len(self.t)):
                r = "" if residual is None else repr(float(residual[i]))
                w.writerow([repr(float(s[i]))] + [repr(float(c)) for c in self.x[i]] + [r])


def arclength(curve):
    G = curve.grid.metric_at(curve.x)
    speed = np.sqrt(np.einsum("ti,tij,tj->t", curve.v, G, curve.v))
    dt = np.diff(curve.t)
    return np.concatenate([[0.0], np.cumsum(0.5 * dt * (speed[1:] + speed[:-1]))])


class _NodeInterpolator:
    """Multilinear interpolation of nodal arrays in chart coordinates."""

    def __init__(self, grid, values):
        self.grid = grid
        self.values = values.reshape(grid.shape + values.shape[1:])

    def __call__(self, p):
        g = self.grid
        p = np.asarray(p, dtype=float)
        idx0, frac = [], []
        for a in range(g.dim):
            h = g.spacing[a]
            if g.kind == "sphere" and a == 0:
                s = p[a] / h - 0.5
                i0 = int(np.floor(s))
                if i0 < 0 or i0 + 1 >= g.shape[0]:
                    raise PoleProximity("interpolation point is inside the polar cap")
            else:
                s = p[a] / h
                i0 = int(np.floor(s))
            idx0.append(i0)
            frac.append(s - i0)
        out = 0.0
        for corner in range(2**g.dim):
            wgt = 1.0
            ind = []
            for a in range(g.dim):
                b = (corner >> a) & 1
                wgt *= frac[a] if b else 1 - frac[a]
                ind.append((idx0[a] + b) % g.shape[a])
            if wgt:
                out = out + wgt * self.values[tuple(ind)]
        return out


def _christoffel_source(grid, metric):
    if isinstance(metric, str):
        if metric != "g":
            raise ValueError("metric must be 'g', a ReconstructionResult or a nodal metric array")
        return lambda p: grid.christoffel_at(p)[0]
    gbar = metric.gbar if isinstance(metric, ReconstructionResult) else np.asarray(metric)
    interp = _NodeInterpolator(grid, christoffels_from_metric(grid, gbar))
    return interp


def _check_pole(grid, x):
    if grid.kind == "sphere" and np.sin(x[0]) < 2 * grid.h:
        raise PoleProximity(f"sin(theta) = {np.sin(x[0]):.3g} is below 2h = {2 * grid.h:.3g}")


def geodesic_integrate(grid, x0, v0, T, steps, metric="g"):
    """Integrate ``x'' + Gamma(x', x') = 0`` with the classical fourth-order Runge-Kutta scheme.

    ``metric="g"`` uses the analytic Christoffel symbols of the grid; a
    :class:`ReconstructionResult` or nodal metric array uses centred
    differences of that field, interpolated multilinearly.
    """
    if steps < 100 * T:
        raise ValueError("need at least 100 steps per unit parameter length")
    gam = _christoffel_source(grid, metric)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    _check_pole(grid, x)
    dt = T / steps

    def rhs(x, v):
        _check_pole(grid, x)
        G = gam(x)
        return v, -np.einsum("kij,i,j->k", G, v, v)

    xs, vs = [x.copy()], [v.copy()]
    for _ in range(steps):
        k1x, k1v = rhs(x, v)
        k2x, k2v = rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = rhs(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs.append(x.copy())
        vs.append(v.copy())
    return Curve(grid, np.linspace(0, T, steps + 1), np.array(xs), np.array(vs))


def geodesic_residual_profile(grid, gbar, curve):
    """Geodesic curvature of a ``g``-geodesic measured in ``gbar``, per sample.

    Along a ``g``-geodesic ``x'' = -Gamma(x', x')``, so the ``gbar``
    acceleration is ``a = (Gamma_bar - Gamma)(x', x')``. The component of
    ``a`` ``gbar``-orthogonal to ``x'`` divided by ``|x'|^2_gbar`` vanishes
    exactly when the curve is a reparametrised ``gbar``-geodesic. Both
    Christoffel fields are centred differences of nodal metrics, so
    ``gbar = c g`` gives zero identically.
    """
    gb = gbar.gbar if isinstance(gbar, ReconstructionResult) else np.asarray(gbar)
    if len(curve.t) < 100:
        raise InvalidCurve("curve must have at least 100 samples")
    diff = _NodeInterpolator(
        grid, christoffels_from_metric(grid, gb) - christoffels_from_metric(grid, grid.metric)
    )
    gint = _NodeInterpolator(grid, gb)
    out = np.empty(len(curve.t))
    for s, (x, v) in enumerate(zip(curve.x, curve.v)):
        G = gint(x)
        vv = v @ G @ v
        if not vv > 0:
            raise InvalidCurve(f"zero velocity at sample {s}")
        a = np.einsum("kij,i,j->k", diff(x), v, v)
        a_perp = a - (a @ G @ v) / vv * v
        out[s] = np.sqrt(max(a_perp @ G @ a_perp, 0.0)) / vv
    return out


def unparametrized_geodesic_residual(grid, gbar, curve):
    """Maximum over samples of :func:`geodesic_residual_profile`."""
    return float(geodesic_residual_profile(grid, gbar, curve).max())


def random_sphere_geodesic_starts(count, seed, min_sin=0.5):
    """Starts ``(x0, v0)`` of unit-speed great circles keeping ``sin(theta) >= min_sin``.

    Points of the great circle with unit normal ``m`` satisfy
    ``|z| <= sqrt(1 - m_z^2)``, i.e. ``sin(theta) >= |m_z|``.
    Starts are placed on the equator crossing.
    """
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        m = rng.standard_normal(3)
        m /= np.linalg.norm(m)
        if abs(m[2]) < min_sin:
            continue
        # equator crossing point p = z x m normalised, tangent t = m x p
        p = np.cross([0.0, 0.0, 1.0], m)
        p /= np.linalg.norm(p)
        t = np.cross(m, p)
        phi0 = np.arctan2(p[1], p[0]) % (2 * np.pi)
        # chart velocity at theta = pi/2: d theta = -t_z, d phi = (t . e_phi)
        v0 = np.array([-t[2], -np.sin(phi0) * t[0] + np.cos(phi0) * t[1]])
        out.append((np.array([np.pi / 2, phi0]), v0))
    return out
