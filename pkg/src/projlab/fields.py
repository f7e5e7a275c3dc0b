"""Covariant tensor fields on a grid and their pointwise algebra.

Fields are stored fully covariant. Symmetric slots are stored once: a
``sym2`` field keeps the components ``(i, j)`` with ``i <= j`` and a
``cov1_sym2`` field keeps ``(k, i, j)`` with ``i <= j``. Flattened vectors
are component-major, i.e. ``vector[c * n_nodes + x]``.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ValenceMismatch

__all__ = [
    "Valence",
    "SCALAR",
    "ONE_FORM",
    "SYM2",
    "COV1_SYM2",
    "TensorField",
    "l2_inner",
    "l2_norm",
    "raise_index",
    "lower_index",
    "lie_derivative_metric",
    "random_field",
    "metric_field",
    "trace_free_part",
    "full_valence",
    "as_full",
    "expansion",
    "compression",
    "gram",
]

_RANKS = {"scalar": 0, "one_form": 1, "sym2": 2, "cov1_sym2": 3, "full2": 2, "full3": 3}


@dataclass(frozen=True)
class Valence:
    """Rank and symmetry type of a covariant tensor bundle."""

    symmetry: str
    trace_free_tail: bool = False

    def __post_init__(self):
        if self.symmetry not in _RANKS:
            raise ValueError(f"unknown symmetry {self.symmetry!r}")
        if self.trace_free_tail and self.rank < 2:
            raise ValueError("trace_free_tail needs two symmetric tail slots")

    @property
    def rank(self):
        return _RANKS[self.symmetry]

    def n_components(self, n):
        """Number of stored (independent) components in dimension ``n``."""
        return len(_indep(self.symmetry, n))

    def n_free(self, n):
        """Dimension of the fibre, accounting for the trace constraint."""
        c = self.n_components(n)
        if self.trace_free_tail:
            c -= 1 if self.rank == 2 else n
        return c


SCALAR = Valence("scalar")
ONE_FORM = Valence("one_form")
SYM2 = Valence("sym2")
COV1_SYM2 = Valence("cov1_sym2")


def full_valence(rank):
    """Valence of unsymmetrised covariant tensors of the given rank."""
    return (SCALAR, ONE_FORM, Valence("full2"), Valence("full3"))[rank]


def as_full(f):
    """Re-store a field with every component kept explicitly."""
    return TensorField.from_full(f.grid, full_valence(f.valence.rank), f.full())


@lru_cache(maxsize=None)
def _indep(symmetry, n):
    r = _RANKS[symmetry]
    if symmetry == "scalar":
        return ((),)
    if symmetry == "one_form":
        return tuple((i,) for i in range(n))
    if symmetry.startswith("full"):
        return tuple(itertools.product(range(n), repeat=r))
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    if symmetry == "sym2":
        return tuple(pairs)
    assert r == 3
    return tuple((k,) + p for k in range(n) for p in pairs)


def _canonical(symmetry, idx):
    if symmetry == "sym2":
        return tuple(sorted(idx))
    if symmetry == "cov1_sym2":
        return (idx[0],) + tuple(sorted(idx[1:]))
    return tuple(idx)


def _full_linear(idx, n):
    out = 0
    for i in idx:
        out = out * n + i
    return out


@lru_cache(maxsize=None)
def expansion(valence, n):
    """Matrix ``P`` of shape ``(n**rank, C)`` mapping stored to full components."""
    r = valence.rank
    comps = _indep(valence.symmetry, n)
    pos = {c: a for a, c in enumerate(comps)}
    P = np.zeros((n**r, len(comps)))
    for idx in itertools.product(range(n), repeat=r):
        P[_full_linear(idx, n), pos[_canonical(valence.symmetry, idx)]] = 1.0
    P.setflags(write=False)
    return P


@lru_cache(maxsize=None)
def compression(valence, n):
    """Left inverse of :func:`expansion` that symmetrises before picking."""
    P = expansion(valence, n)
    Q = P.T / P.sum(axis=0)[:, None]
    Q.setflags(write=False)
    return Q


def _full_gram(ginv, r):
    """Nodewise ``g^{-1}`` tensored ``r`` times, shape ``(N, n**r, n**r)``."""
    N, n, _ = ginv.shape
    G = np.ones((N, 1, 1))
    for _ in range(r):
        G = np.einsum("xab,xcd->xacbd", G, ginv).reshape(N, G.shape[1] * n, G.shape[2] * n)
    return G


def gram(grid, valence):
    """Nodewise Gram matrices of the metric inner product on stored components."""
    P = expansion(valence, grid.dim)
    G = _full_gram(grid.metric_inv, valence.rank)
    out = np.einsum("fa,xfg,gb->xab", P, G, P)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


@dataclass(frozen=True, eq=False)
class TensorField:
    """Stored components ``(n_nodes, C)`` of a covariant tensor field."""

    grid: object
    valence: Valence
    components: np.ndarray

    def __post_init__(self):
        C = self.valence.n_components(self.grid.dim)
        comp = np.asarray(self.components, dtype=float)
        if comp.ndim == 1 and C == 1:
            comp = comp[:, None]
        if comp.shape != (self.grid.n_nodes, C):
            raise ValueError(
                f"components have shape {comp.shape}, expected {(self.grid.n_nodes, C)}"
            )
        comp.setflags(write=False)
        object.__setattr__(self, "components", comp)

    @classmethod
    def from_full(cls, grid, valence, full):
        """Build from a full component array ``(n_nodes, n, ..., n)``."""
        N = grid.n_nodes
        Q = compression(valence, grid.dim)
        return cls(grid, valence, full.reshape(N, -1) @ Q.T)

    @classmethod
    def from_vector(cls, grid, valence, vec):
        C = valence.n_components(grid.dim)
        return cls(grid, valence, np.asarray(vec).reshape(C, grid.n_nodes).T)

    def full(self):
        n = self.grid.dim
        P = expansion(self.valence, n)
        return (self.components @ P.T).reshape((self.grid.n_nodes,) + (n,) * self.valence.rank)

    def vector(self):
        return self.components.T.ravel()

    def __add__(self, other):
        _check(self, other)
        return TensorField(self.grid, self.valence, self.components + other.components)

    def __sub__(self, other):
        _check(self, other)
        return TensorField(self.grid, self.valence, self.components - other.components)

    def __mul__(self, c):
        return TensorField(self.grid, self.valence, self.components * c)

    __rmul__ = __mul__

    def to_csv(self, path):
        """Write node coordinates and stored components, one row per node."""
        comps = _indep(self.valence.symmetry, self.grid.dim)
        header = [f"x{a}" for a in range(self.grid.dim)]
        header += ["c_" + "".join(map(str, c)) if c else "c" for c in comps]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in np.hstack([self.grid.nodes, self.components]):
                w.writerow([repr(float(v)) for v in row])


def _check(a, b):
    if a.grid is not b.grid:
        raise ValenceMismatch("fields live on different grids")
    if a.valence != b.valence:
        raise ValenceMismatch(f"valence {a.valence} != {b.valence}")


def l2_inner(a, b):
    """Weighted L2 inner product ``sum_x w_x g_x(a, b)``."""
    _check(a, b)
    G = gram(a.grid, a.valence)
    local = np.einsum("xa,xab,xb->x", a.components, G, b.components)
    return float(np.sum(a.grid.quad_weights * local))


def l2_norm(a):
    return float(np.sqrt(max(l2_inner(a, a), 0.0)))


def raise_index(f, slot):
    """Full component array with index ``slot`` raised by ``g^{ij}``."""
    if not 0 <= slot < f.valence.rank:
        raise ValueError(f"slot {slot} out of range for rank {f.valence.rank}")
    return _contract_slot(f.full(), f.grid.metric_inv, slot)


def lower_index(full, grid, slot):
    """Inverse of :func:`raise_index` on a full component array."""
    return _contract_slot(full, grid.metric, slot)


def _contract_slot(full, mat, slot):
    moved = np.moveaxis(full, slot + 1, -1)
    out = np.einsum("x...b,xab->x...a", moved, mat)
    return np.moveaxis(out, -1, slot + 1)


def metric_field(grid, scale=1.0):
    """The metric itself as a ``sym2`` field."""
    return TensorField.from_full(grid, SYM2, scale * grid.metric)


def trace_free_part(f):
    """Remove the ``g``-trace of the last two slots."""
    n = f.grid.dim
    full = f.full()
    ginv, g = f.grid.metric_inv, f.grid.metric
    if f.valence.rank == 2:
        tr = np.einsum("xij,xij->x", ginv, full)
        full = full - tr[:, None, None] * g / n
    elif f.valence.rank == 3:
        tr = np.einsum("xij,xkij->xk", ginv, full)
        full = full - tr[:, :, None, None] * g[:, None] / n
    else:
        raise ValueError("trace-free projection needs rank >= 2")
    return TensorField.from_full(f.grid, Valence(f.valence.symmetry, True), full)


def lie_derivative_metric(xi_form):
    """``L_xi g`` for ``xi`` the metric dual of a one-form, i.e. ``2 delta^* theta``."""
    from .operators import delta_star

    D = delta_star(xi_form.grid)
    return 2.0 * D.apply(xi_form)


def _ambient_jacobian(nodes):
    th, ph = nodes[:, 0], nodes[:, 1]
    st, ct, sp, cp = np.sin(th), np.cos(th), np.sin(ph), np.cos(ph)
    J = np.zeros((nodes.shape[0], 3, 2))
    J[:, :, 0] = np.stack([ct * cp, ct * sp, -st], axis=1)
    J[:, :, 1] = np.stack([-st * sp, st * cp, np.zeros_like(st)], axis=1)
    X = np.stack([st * cp, st * sp, ct], axis=1)
    return X, J


def _random_ambient(rng, X, degree, count):
    exps = [e for e in itertools.product(range(degree + 1), repeat=3) if sum(e) <= degree]
    mono = np.stack([np.prod(X ** np.array(e), axis=1) for e in exps], axis=1)
    coef = rng.standard_normal((len(exps), count))
    return mono @ coef


def random_field(grid, valence, seed, bandwidth=2):
    """Deterministic band-limited random field.

    On the torus the field is a random trigonometric polynomial with
    ``|m_j| <= bandwidth``. On the sphere each ambient Cartesian component is a
    random polynomial of total degree ``<= bandwidth`` in ``(x, y, z)``, pulled
    back to the chart; this is smooth through the poles and has spherical
    harmonic degree at most ``bandwidth + rank``.
    """
    rng = np.random.default_rng(seed)
    n, r = grid.dim, valence.rank
    if grid.kind == "torus":
        N = grid.shape[0]
        if not bandwidth < N / 2:
            raise ValueError("bandwidth must be below N/2")
        C = valence.n_components(n)
        L = grid.params["L"]
        modes = np.array(list(itertools.product(range(-bandwidth, bandwidth + 1), repeat=n)))
        phase = (2 * np.pi / L) * grid.nodes @ modes.T
        a = rng.standard_normal((len(modes), C))
        b = rng.standard_normal((len(modes), C))
        comps = np.cos(phase) @ a + np.sin(phase) @ b
        f = TensorField(grid, Valence(valence.symmetry), comps / np.sqrt(len(modes)))
    else:
        if not bandwidth < grid.shape[0] / 2:
            raise ValueError("bandwidth must be below N_theta/2")
        X, J = _ambient_jacobian(grid.nodes)
        T = _random_ambient(rng, X, bandwidth, 3**r).reshape((-1,) + (3,) * r)
        for _ in range(r):
            # pull back the leading ambient slot; after r passes every slot is a chart index
            T = np.einsum("xa...,xai->x...i", T, J)
        f = TensorField.from_full(grid, Valence(valence.symmetry), T)
    if valence.trace_free_tail:
        f = trace_free_part(f)
    return f
