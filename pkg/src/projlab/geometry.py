"""Model geometries on structured grids: the flat torus and the round 2-sphere.

Both geometries are represented by a :class:`ManifoldGrid` holding node
coordinates, the metric and its inverse, Christoffel symbols, quadrature
weights and the neighbour tables that encode periodic wrapping and, for the
sphere, the continuation of the latitude-longitude chart across the poles.

Index conventions
-----------------
``christoffels[x, k, i, j]`` is the symbol with upper index ``k``.
Curvature is the constant ``curvature`` (sectional curvature), and the
Riemann tensor is produced on demand as ``R[x, a, b, c, d]`` with all
indices lowered, normalised so that ``R(X, Y, X, Y) = K (|X|^2 |Y|^2 - <X,Y>^2)``.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePlane, GridError

__all__ = [
    "ManifoldGrid",
    "build_flat_torus",
    "build_round_sphere",
    "sectional_curvature",
    "christoffels_from_metric",
    "record_grid",
]

_EPS = np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class ManifoldGrid:
    """A discretised compact model manifold.

    Instances are immutable after construction and may be shared freely.
    """

    kind: str
    dim: int
    shape: tuple
    spacing: tuple
    nodes: np.ndarray
    metric: np.ndarray
    metric_inv: np.ndarray
    christoffels: np.ndarray
    quad_weights: np.ndarray
    curvature: float
    params: dict
    _shifts: dict = field(repr=False)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def h(self):
        """Largest chart step, used as the nominal resolution."""
        return max(self.spacing)

    @property
    def volume(self):
        return float(self.quad_weights.sum())

    @property
    def grid_hash(self):
        blob = json.dumps({"kind": self.kind, **self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def shift(self, axis, step):
        """Neighbour table for a unit step along ``axis``.

        Returns
        -------
        index : ndarray of int
            Node index of the neighbour of every node.
        crossed : ndarray of bool
            True where the step passes through a pole of the sphere chart.
            Tensor components with an odd number of colatitude indices
            change sign across such a step.
        """
        return self._shifts[(axis, step)]

    @property
    def riemann(self):
        """Fully covariant Riemann tensor ``R[x, a, b, c, d]``."""
        g = self.metric
        K = self.curvature
        return K * (
            np.einsum("xac,xbd->xabcd", g, g) - np.einsum("xad,xbc->xabcd", g, g)
        )

    @property
    def ricci(self):
        """Ricci tensor ``Ric[x, b, d] = g^{ac} R[x, a, b, c, d]``."""
        return np.einsum("xac,xabcd->xbd", self.metric_inv, self.riemann)

    def metric_at(self, points):
        """Analytic metric at arbitrary chart points, shape ``(m, n, n)``."""
        points = np.atleast_2d(points)
        m = points.shape[0]
        if self.kind == "torus":
            return np.broadcast_to(np.eye(self.dim), (m, self.dim, self.dim)).copy()
        s = np.sin(points[:, 0])
        g = np.zeros((m, 2, 2))
        g[:, 0, 0] = 1.0
        g[:, 1, 1] = s * s
        return g

    def christoffel_at(self, points):
        """Analytic Christoffel symbols at arbitrary chart points."""
        points = np.atleast_2d(points)
        m = points.shape[0]
        n = self.dim
        gam = np.zeros((m, n, n, n))
        if self.kind == "sphere":
            th = points[:, 0]
            s, c = np.sin(th), np.cos(th)
            gam[:, 0, 1, 1] = -s * c
            gam[:, 1, 0, 1] = c / s
            gam[:, 1, 1, 0] = c / s
        return gam


def _torus_shifts(n, N):
    idx = np.arange(N**n).reshape((N,) * n)
    out = {}
    no_cross = np.zeros(N**n, dtype=bool)
    for axis in range(n):
        for step in (1, -1):
            # neighbour of node x along +axis is the node whose value sits at x + h
            nb = np.roll(idx, -step, axis=axis).ravel()
            out[(axis, step)] = (nb, no_cross)
    return out


def build_flat_torus(n, N, L=2 * np.pi):
    """Uniform periodic grid on the flat torus ``T^n = (R / L Z)^n``.

    Parameters
    ----------
    n : int
        Dimension, ``2 <= n <= 4``.
    N : int
        Nodes per axis; must be even and at least 4.
    L : float
        Period along each axis.
    """
    if n < 2:
        raise GridError(f"dimension must be >= 2, got {n}")
    if n > 4:
        raise GridError(f"dimension {n} exceeds the memory guard (n <= 4)")
    if N < 4 or N % 2:
        raise GridError(f"N must be even and >= 4, got {N}")
    if not L > 0:
        raise GridError("period L must be positive")
    h = L / N
    axes = [np.arange(N) * h] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    size = N**n
    eye = np.broadcast_to(np.eye(n), (size, n, n)).copy()
    return ManifoldGrid(
        kind="torus",
        dim=n,
        shape=(N,) * n,
        spacing=(h,) * n,
        nodes=nodes,
        metric=eye,
        metric_inv=eye.copy(),
        christoffels=np.zeros((size, n, n, n)),
        quad_weights=np.full(size, h**n),
        curvature=0.0,
        params={"n": n, "N": N, "L": float(L)},
        _shifts=_torus_shifts(n, N),
    )


def _sphere_shifts(Nt, Np):
    it, jp = np.meshgrid(np.arange(Nt), np.arange(Np), indexing="ij")
    it, jp = it.ravel(), jp.ravel()
    half = Np // 2

    def node(i, j):
        return i * Np + (j % Np)

    out = {}
    # colatitude axis: stepping past a pole lands on the antipodal meridian
    up = it + 1
    cross_up = up >= Nt
    out[(0, 1)] = (
        np.where(cross_up, node(Nt - 1, jp + half), node(np.minimum(up, Nt - 1), jp)),
        cross_up,
    )
    dn = it - 1
    cross_dn = dn < 0
    out[(0, -1)] = (
        np.where(cross_dn, node(0, jp + half), node(np.maximum(dn, 0), jp)),
        cross_dn,
    )
    none = np.zeros(Nt * Np, dtype=bool)
    out[(1, 1)] = (node(it, jp + 1), none)
    out[(1, -1)] = (node(it, jp - 1), none)
    return out


def build_round_sphere(N_theta, N_phi=None):
    """Latitude-longitude grid on the unit sphere with staggered colatitudes.

    Colatitudes are ``(i + 1/2) pi / N_theta`` so that no node lies on a pole.
    Crossing a pole maps ``(theta, phi)`` to ``(-theta, phi + pi)``.
    """
    if N_phi is None:
        N_phi = 2 * N_theta
    if N_theta < 8:
        raise GridError(f"N_theta must be >= 8, got {N_theta}")
    if N_phi != 2 * N_theta:
        raise GridError("N_phi must equal 2 * N_theta")
    ht = np.pi / N_theta
    hp = 2 * np.pi / N_phi
    theta = (np.arange(N_theta) + 0.5) * ht
    if np.sin(theta[0]) < 10 * _EPS:
        raise GridError("smallest sin(theta) is below 10 machine epsilon")
    phi = np.arange(N_phi) * hp
    T, P = np.meshgrid(theta, phi, indexing="ij")
    nodes = np.stack([T.ravel(), P.ravel()], axis=1)
    s = np.sin(nodes[:, 0])
    c = np.cos(nodes[:, 0])
    size = nodes.shape[0]
    g = np.zeros((size, 2, 2))
    g[:, 0, 0] = 1.0
    g[:, 1, 1] = s * s
    ginv = np.zeros_like(g)
    ginv[:, 0, 0] = 1.0
    ginv[:, 1, 1] = 1.0 / (s * s)
    gam = np.zeros((size, 2, 2, 2))
    gam[:, 0, 1, 1] = -s * c
    gam[:, 1, 0, 1] = c / s
    gam[:, 1, 1, 0] = c / s
    return ManifoldGrid(
        kind="sphere",
        dim=2,
        shape=(N_theta, N_phi),
        spacing=(ht, hp),
        nodes=nodes,
        metric=g,
        metric_inv=ginv,
        christoffels=gam,
        # exact cell areas; equal to sin(theta) h_theta h_phi up to O(h^2)
        # but summing to 4 pi exactly
        quad_weights=2 * s * np.sin(ht / 2) * hp,
        curvature=1.0,
        params={"N_theta": N_theta, "N_phi": N_phi},
        _shifts=_sphere_shifts(N_theta, N_phi),
    )


def sectional_curvature(grid, x, plane):
    """Sectional curvature of the plane spanned by two tangent vectors at node ``x``."""
    u, v = (np.asarray(p, dtype=float) for p in plane)
    g = grid.metric[x]
    uu, vv, uv = u @ g @ u, v @ g @ v, u @ g @ v
    gram = uu * vv - uv * uv
    if uu <= 0 or vv <= 0 or gram < 1e-12 * uu * vv:
        raise DegeneratePlane("plane vectors are (numerically) linearly dependent")
    R = grid.riemann[x] if grid.curvature else np.zeros((grid.dim,) * 4)
    return float(np.einsum("abcd,a,b,c,d->", R, u, v, u, v) / gram)


def christoffels_from_metric(grid, metric):
    """Christoffel symbols of a nodal metric field by centred differences.

    ``metric`` has shape ``(n_nodes, n, n)``; pole crossings flip the sign of
    components with exactly one colatitude index.
    """
    n = grid.dim
    dg = np.empty((grid.n_nodes, n, n, n))  # dg[x, a, i, j] = d_a g_ij
    for a in range(n):
        ip, cp = grid.shift(a, 1)
        im, cm = grid.shift(a, -1)
        fp = metric[ip].copy()
        fm = metric[im].copy()
        for i in range(n):
            for j in range(n):
                if ((i == 0) + (j == 0)) % 2 and grid.kind == "sphere":
                    fp[cp, i, j] *= -1
                    fm[cm, i, j] *= -1
        dg[:, a] = (fp - fm) / (2 * grid.spacing[a])
    ginv = np.linalg.inv(metric)
    low = 0.5 * (
        np.einsum("xilj->xlij", dg) + np.einsum("xjli->xlij", dg) - dg
    )  # Gamma_{l i j} with l lowered
    return np.einsum("xkl,xlij->xkij", ginv, low)


def record_grid(grid, path):
    """Append ``parameters -> grid hash`` to a JSON provenance cache file."""
    data = {}
    if os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
    key = json.dumps({"kind": grid.kind, **grid.params}, sort_keys=True)
    data[key] = grid.grid_hash
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
    return grid.grid_hash
