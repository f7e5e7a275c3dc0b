"""Sparse discretisations of the first- and second-order operators.

Every operator acts on flattened component-major field vectors (see
:mod:`projlab.fields`). Derivatives are second-order finite differences.

Working frame
-------------
Derivatives are assembled in a working frame. On the torus this is the chart
frame. On the sphere tensors are carried as ambient Cartesian components,
which are smooth through the poles, and ``nabla`` is the tangential
projection of the ordinary derivative. Chart components in the
latitude-longitude frame degenerate like ``sin(theta)^p`` near the poles and
finite differences of them lose accuracy there; the ambient frame avoids
this. Inputs and outputs stay in chart components via exact nodewise maps.

Stabilisation
-------------
Centred differences annihilate the checkerboard mode ``(-1)^j``, which would
put spurious vectors into every kernel. First-order operators ``D`` are
assembled with forward and with backward differences and stored as::

    [ (D+ + D-) / 2 ]      <- principal block, the centred discretisation
    [ (D+ - D-) / 2 ]      <- stabiliser, (h/2) x second differences

with block-diagonal codomain mass, so ``|D x|^2 = |D+ x|^2/2 + |D- x|^2/2``.
The second-order operator ``E`` uses centred differences in its principal
block and a stacked block of fourth differences scaled by ``h^3``, which is
``O(h^3)`` on smooth fields and grows like ``h^-1`` on oscillating ones.

Sign convention: ``delta = -div`` throughout, ``(delta h)_j = -nabla^i h_ij``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import InvalidField
from .fields import (
    COV1_SYM2,
    ONE_FORM,
    SCALAR,
    SYM2,
    TensorField,
    Valence,
    compression,
    full_valence,
    expansion,
    gram,
)

__all__ = [
    "DiscreteOperator",
    "NormalOperator",
    "mass_matrix",
    "covariant_derivative",
    "delta_star",
    "delta_div",
    "sinjukov_S",
    "sinjukov_S_star",
    "eisenhart_E",
    "eisenhart_E_star",
    "normal_operator",
    "sinjukov_closed_form",
    "hodge_laplacian_1forms",
    "rough_laplacian",
    "integral_identity_residual",
]


# --------------------------------------------------------------------------
# containers


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    """Linear map between field spaces with the masses that define adjoints.

    ``matrix`` may stack a stabilising block under the principal (consistent)
    discretisation; ``principal_rows`` rows form the principal block.
    """

    name: str
    grid: object
    domain: Valence
    codomain: Valence
    matrix: sp.csr_matrix
    domain_mass: sp.csr_matrix
    codomain_mass: sp.csr_matrix
    blocks: int = 1
    convention: str = ""
    principal_rows: int = None

    @property
    def block_size(self):
        if self.principal_rows is not None:
            return self.principal_rows
        return self.matrix.shape[0] // self.blocks

    @property
    def principal(self):
        return self.matrix[: self.block_size]

    def apply(self, f):
        """Apply the principal block to a field."""
        if f.valence.symmetry != self.domain.symmetry:
            raise InvalidField(f"{self.name} expects {self.domain.symmetry}")
        return TensorField.from_vector(self.grid, self.codomain, self.principal @ f.vector())

    def adjoint_matrix(self):
        """Weighted transpose ``M_dom^{-1} D^T M_cod`` (exact discrete adjoint)."""
        Minv = inverse_mass(self.grid, self.domain)
        return (Minv @ (self.matrix.T @ self.codomain_mass)).tocsr()

    def inner_codomain(self, y1, y2):
        return float(y1 @ (self.codomain_mass @ y2))

    def inner_domain(self, x1, x2):
        return float(x1 @ (self.domain_mass @ x2))

    def to_mtx(self, path):
        """Matrix Market export; masses go next to it with a ``-mass`` suffix."""
        stem = str(path)[:-4] if str(path).endswith(".mtx") else str(path)
        scipy.io.mmwrite(stem + ".mtx", self.matrix, comment=self.name)
        scipy.io.mmwrite(stem + "-mass.mtx", self.domain_mass, comment="domain mass")
        scipy.io.mmwrite(stem + "-codomain-mass.mtx", self.codomain_mass, comment="codomain mass")


@dataclass(frozen=True, eq=False)
class NormalOperator:
    """``D^* D`` as the symmetric pencil ``(A, M)``: ``A x = mu M x``."""

    name: str
    grid: object
    domain: Valence
    A: sp.csr_matrix
    M: sp.csr_matrix
    factor: DiscreteOperator = field(default=None, repr=False)

    def apply(self, f):
        Minv = inverse_mass(self.grid, self.domain)
        return TensorField.from_vector(self.grid, self.domain, Minv @ (self.A @ f.vector()))

    def to_mtx(self, path):
        stem = str(path)[:-4] if str(path).endswith(".mtx") else str(path)
        scipy.io.mmwrite(stem + ".mtx", self.A, comment=self.name)
        scipy.io.mmwrite(stem + "-mass.mtx", self.M, comment="mass")


# --------------------------------------------------------------------------
# pointwise and difference building blocks


def pointwise(L):
    """Sparse matrix of the nodewise linear maps ``L[x]`` of shape ``(Cout, Cin)``."""
    N, Co, Ci = L.shape
    x = np.arange(N)
    rows = (np.arange(Co)[:, None, None] * N + x[None, None, :]).repeat(Ci, axis=1)
    cols = np.broadcast_to(np.arange(Ci)[None, :, None] * N + x[None, None, :], (Co, Ci, N))
    vals = np.moveaxis(L, 0, -1)
    mask = vals != 0
    return sp.csr_matrix((vals[mask], (rows[mask], cols[mask])), shape=(Co * N, Ci * N))


def _const(P, N):
    return sp.kron(sp.csr_matrix(P), sp.identity(N), format="csr")


@lru_cache(maxsize=64)
def mass_matrix(grid, valence):
    """Block-diagonal ``diag_x(w_x Gram_x)`` on stored components."""
    G = gram(grid, valence) * grid.quad_weights[:, None, None]
    return pointwise(G)


@lru_cache(maxsize=64)
def inverse_mass(grid, valence):
    G = gram(grid, valence) * grid.quad_weights[:, None, None]
    return pointwise(np.linalg.inv(G))


def _stacked_mass(grid, valence, blocks):
    M = mass_matrix(grid, valence)
    return M if blocks == 1 else sp.block_diag([M] * blocks, format="csr")


@lru_cache(maxsize=256)
def _diff(grid, axis, flavor):
    """First difference of a scalar function along a chart axis."""
    N = grid.n_nodes
    h = grid.spacing[axis]
    x = np.arange(N)

    def shift(step):
        idx, _ = grid.shift(axis, step)
        return sp.csr_matrix((np.ones(N), (x, idx)), shape=(N, N))

    I = sp.identity(N, format="csr")
    if flavor == "c":
        return ((shift(1) - shift(-1)) / (2 * h)).tocsr()
    if flavor == "+":
        return ((shift(1) - I) / h).tocsr()
    if flavor == "-":
        return ((I - shift(-1)) / h).tocsr()
    raise ValueError(flavor)


def _lin(idx, dims):
    out = 0
    for i, d in zip(idx, dims):
        out = out * d + i
    return out


@lru_cache(maxsize=8)
def _frame(grid):
    """Working frame in which derivatives are assembled.

    On the torus this is the chart frame. On the sphere tensors are carried as
    ambient Cartesian components, which are smooth through the poles; the
    covariant derivative is then the tangential projection of the ordinary
    derivative and no Christoffel symbols appear.

    Returns ``(m, E, J, P, gw, gw_inv)`` where ``E[x, k, a]`` is the dual
    coframe (chart covector ``k`` in working components), ``J[x, a, i]`` the
    frame of coordinate vectors, ``P`` the tangential projector or ``None``,
    and ``gw``/``gw_inv`` the metric and its (pseudo-)inverse in the working frame.
    """
    n, N = grid.dim, grid.n_nodes
    if grid.kind == "torus":
        eye = np.broadcast_to(np.eye(n), (N, n, n))
        return n, eye, eye, None, grid.metric, grid.metric_inv
    from .fields import _ambient_jacobian

    X, J = _ambient_jacobian(grid.nodes)
    E = np.einsum("xkl,xal->xka", grid.metric_inv, J)
    P = np.eye(3)[None] - np.einsum("xa,xb->xab", X, X)
    return 3, E, J, P, P, P


def _slot_map(N, dims, s, A):
    """Apply the nodewise matrix ``A[x, out, in]`` to slot ``s`` of a tensor.

    ``dims`` are the slot dimensions of the input; slot ``s`` becomes
    ``A.shape[1]``-dimensional.
    """
    dout = list(dims)
    dout[s] = A.shape[1]
    rows, cols, vals = [], [], []
    x = np.arange(N)
    for I in itertools.product(*[range(d) for d in dims]):
        for b in range(A.shape[1]):
            v = A[:, b, I[s]]
            if not np.any(v):
                continue
            J = I[:s] + (b,) + I[s + 1 :]
            rows.append(_lin(J, dout) * N + x)
            cols.append(_lin(I, dims) * N + x)
            vals.append(v)
    shape = (int(np.prod(dout)) * N, int(np.prod(dims)) * N)
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


@lru_cache(maxsize=32)
def _to_work(grid, r):
    """Chart components to working components for a covariant rank-``r`` tensor."""
    m, E = _frame(grid)[:2]
    N, n = grid.n_nodes, grid.dim
    M = sp.identity(n**r * N, format="csr")
    if grid.kind == "torus":
        return M
    Et = np.swapaxes(E, 1, 2)  # (x, a, k)
    dims = [n] * r
    for s in range(r):
        M = _slot_map(N, dims, s, Et) @ M
        dims[s] = m
    return M.tocsr()


@lru_cache(maxsize=32)
def _from_work(grid, r):
    """Working components back to chart components (pull-back by the frame)."""
    m, _, J = _frame(grid)[:3]
    N, n = grid.n_nodes, grid.dim
    M = sp.identity(m**r * N, format="csr")
    if grid.kind == "torus":
        return M
    Jt = np.swapaxes(J, 1, 2)  # (x, i, a)
    dims = [m] * r
    for s in range(r):
        M = _slot_map(N, dims, s, Jt) @ M
        dims[s] = n
    return M.tocsr()


@lru_cache(maxsize=64)
def nabla_full(grid, r, flavor):
    """Covariant derivative on full working components, new index first.

    ``(nabla f)_{a I} = P_I (E^k_a d_k f_I)``: the chart derivative of each
    working component is combined with the dual coframe and every old slot
    is projected back to the tangent space.
    """
    m, E, _, P = _frame(grid)[:4]
    N = grid.n_nodes
    mr = m**r
    x = np.arange(N)
    out = None
    for k in range(grid.dim):
        Dk = sp.kron(sp.identity(mr), _diff(grid, k, flavor), format="csr")
        rows, cols, vals = [], [], []
        for a in range(m):
            v = E[:, k, a]
            if not np.any(v):
                continue
            for I in range(mr):
                rows.append((a * mr + I) * N + x)
                cols.append(I * N + x)
                vals.append(v)
        Lk = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(m * mr * N, mr * N),
        )
        term = Lk @ Dk
        out = term if out is None else out + term
    if P is not None:
        for s in range(1, r + 1):
            out = _slot_map(N, [m] * (r + 1), s, P) @ out
    return out.tocsr()


def nabla_chart(grid, r, flavor):
    """:func:`nabla_full` between chart components."""
    return (_from_work(grid, r + 1) @ nabla_full(grid, r, flavor) @ _to_work(grid, r)).tocsr()


@lru_cache(maxsize=64)
def contract_full(grid, r, s1, s2):
    """Contract slots ``s1 < s2`` of a full rank-``r`` working tensor with the inverse metric."""
    m, gi = _frame(grid)[0], _frame(grid)[5]
    N = grid.n_nodes
    x = np.arange(N)
    dr = [m] * (r - 2)
    rows, cols, vals = [], [], []
    for I in itertools.product(range(m), repeat=r):
        v = gi[:, I[s1], I[s2]]
        if not np.any(v):
            continue
        rest = tuple(c for t, c in enumerate(I) if t not in (s1, s2))
        rows.append(_lin(rest, dr) * N + x)
        cols.append(_lin(I, [m] * r) * N + x)
        vals.append(v)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m ** (r - 2) * N, m**r * N),
    )


@lru_cache(maxsize=64)
def insert_metric(grid, r, s1, s2):
    """Rank ``r`` to ``r + 2``: the metric occupies output slots ``(s1, s2)``."""
    m, gw = _frame(grid)[0], _frame(grid)[4]
    N = grid.n_nodes
    x = np.arange(N)
    rows, cols, vals = [], [], []
    for I in itertools.product(range(m), repeat=r + 2):
        v = gw[:, I[s1], I[s2]]
        if not np.any(v):
            continue
        rest = tuple(c for t, c in enumerate(I) if t not in (s1, s2))
        rows.append(_lin(I, [m] * (r + 2)) * N + x)
        cols.append(_lin(rest, [m] * r) * N + x)
        vals.append(v)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m ** (r + 2) * N, m**r * N),
    )


def _swap01(m, N, r=2):
    P = np.zeros((m**r, m**r))
    for I in itertools.product(range(m), repeat=r):
        J = (I[1], I[0]) + I[2:]
        P[_lin(J, [m] * r), _lin(I, [m] * r)] = 1.0
    return _const(P, N)


def _sym01(m, N):
    return (0.5 * (sp.identity(m * m * N) + _swap01(m, N))).tocsr()


def _expand(grid, valence):
    """Stored chart components to full working components."""
    full = _const(expansion(valence, grid.dim), grid.n_nodes)
    return (_to_work(grid, valence.rank) @ full).tocsr()


def _compress(grid, valence):
    """Full working components to stored chart components."""
    Q = _const(compression(valence, grid.dim), grid.n_nodes)
    return (Q @ _from_work(grid, valence.rank)).tocsr()


def _m(grid):
    return _frame(grid)[0]


def _stack(plus, minus):
    return sp.vstack([0.5 * (plus + minus), 0.5 * (plus - minus)], format="csr")


# --------------------------------------------------------------------------
# first-order operators


@lru_cache(maxsize=32)
def covariant_derivative(grid, rank):
    """Stacked covariant derivative from full rank ``r`` to full rank ``r + 1``.

    Components are kept unsymmetrised on both sides (see :func:`as_full`).
    """
    if rank > 2:
        raise ValueError("covariant_derivative supports rank <= 2")
    dom, cod = full_valence(rank), full_valence(rank + 1)
    return DiscreteOperator(
        name=f"nabla_rank{rank}",
        grid=grid,
        domain=dom,
        codomain=cod,
        matrix=_stack(nabla_chart(grid, rank, "+"), nabla_chart(grid, rank, "-")),
        domain_mass=mass_matrix(grid, dom),
        codomain_mass=_stacked_mass(grid, cod, 2),
        blocks=2,
        convention="(nabla f)_{k I} with the derivative index k first",
    )


def _delta_star_flavor(grid, flavor):
    n, N = grid.dim, grid.n_nodes
    H = nabla_full(grid, 1, flavor) @ _to_work(grid, 1)
    return _compress(grid, SYM2) @ _sym01(_m(grid), N) @ H


@lru_cache(maxsize=16)
def delta_star(grid):
    """Symmetrised derivative ``(delta^* theta)_ij = (nabla_i theta_j + nabla_j theta_i)/2``."""
    M = _stack(_delta_star_flavor(grid, "+"), _delta_star_flavor(grid, "-"))
    return DiscreteOperator(
        name="delta_star",
        grid=grid,
        domain=ONE_FORM,
        codomain=SYM2,
        matrix=M,
        domain_mass=mass_matrix(grid, ONE_FORM),
        codomain_mass=_stacked_mass(grid, SYM2, 2),
        blocks=2,
        convention="delta^* = sym(nabla); equals half the Lie derivative of g",
    )


def _div_matrix(grid, valence, flavor):
    """``-(nabla^i h_{i ...})`` for sym2 or cov1_sym2 input (stored components)."""
    r = valence.rank
    G = nabla_full(grid, r, flavor)
    C = contract_full(grid, r + 1, 0, 1)
    out_val = ONE_FORM if r == 2 else SYM2
    return -(_compress(grid, out_val) @ C @ G @ _expand(grid, valence))


def delta_div(grid, source=SYM2, construction="transpose"):
    """Divergence ``delta = -div`` from ``sym2`` (or ``cov1_sym2``).

    ``construction="transpose"`` returns the weighted transpose of the principal
    block of :func:`delta_star` (exact adjoint); ``"formula"`` discretises
    ``-nabla^i h_{ij}`` with centred differences.
    """
    if source.symmetry not in ("sym2", "cov1_sym2"):
        raise ValueError("delta_div source must be sym2 or cov1_sym2")
    target = ONE_FORM if source.symmetry == "sym2" else SYM2
    if construction == "formula":
        M = _div_matrix(grid, Valence(source.symmetry), "c").tocsr()
    elif source.symmetry == "sym2":
        Ds = delta_star(grid)
        M = (inverse_mass(grid, ONE_FORM) @ Ds.principal.T @ mass_matrix(grid, SYM2)).tocsr()
    else:
        raise ValueError("transpose construction only exists for sym2 source")
    return DiscreteOperator(
        name=f"delta_{construction}",
        grid=grid,
        domain=Valence(source.symmetry),
        codomain=target,
        matrix=M,
        domain_mass=mass_matrix(grid, Valence(source.symmetry)),
        codomain_mass=mass_matrix(grid, target),
        convention="delta = -div; (delta h)_j = -nabla^i h_ij",
    )


def _sinjukov_flavor(grid, flavor):
    n, N = grid.dim, grid.n_nodes
    G = nabla_full(grid, 2, flavor)  # (k, i, j)
    div = contract_full(grid, 3, 0, 1) @ G  # div_j = g^{ki} nabla_k phi_ij
    sym = insert_metric(grid, 1, 0, 1) + insert_metric(grid, 1, 0, 2)
    full = G - (sym @ div) / (n + 1)
    return _compress(grid, COV1_SYM2) @ full @ _expand(grid, SYM2)


@lru_cache(maxsize=16)
def sinjukov_S(grid):
    """``(S phi)_kij = nabla_k phi_ij - (g_ki div_j + g_kj div_i)/(n+1)``, ``div = -delta``."""
    M = _stack(_sinjukov_flavor(grid, "+"), _sinjukov_flavor(grid, "-"))
    return DiscreteOperator(
        name="sinjukov_S",
        grid=grid,
        domain=SYM2,
        codomain=COV1_SYM2,
        matrix=M,
        domain_mass=mass_matrix(grid, SYM2),
        codomain_mass=_stacked_mass(grid, COV1_SYM2, 2),
        blocks=2,
        convention="div phi_j = g^{ki} nabla_k phi_ij = -(delta phi)_j",
    )


def sinjukov_S_star(grid, construction="transpose"):
    """Adjoint of :func:`sinjukov_S`.

    ``"transpose"`` is the weighted transpose of the stacked operator (maps the
    stacked codomain back to ``sym2``). ``"formula"`` discretises::

        (S^* Phi)_ij = -nabla^k Phi_kij + (nabla_i t_j + nabla_j t_i)/(n+1),
        t_j = g^{ki} Phi_kij

    with centred differences; it acts on a single codomain block.
    """
    S = sinjukov_S(grid)
    if construction == "transpose":
        return S.adjoint_matrix()
    n, N = grid.dim, grid.n_nodes
    Phi = _expand(grid, COV1_SYM2)
    first = -contract_full(grid, 4, 0, 1) @ nabla_full(grid, 3, "c")
    t = contract_full(grid, 3, 0, 1)
    second = 2.0 * _sym01(_m(grid), N) @ nabla_full(grid, 1, "c") @ t / (n + 1)
    return (_compress(grid, SYM2) @ (first + second) @ Phi).tocsr()


def _eisenhart_flavor(grid, outer, inner):
    n, N = grid.dim, grid.n_nodes
    H = nabla_full(grid, 1, inner) @ _to_work(grid, 1)  # H_ij = nabla_i theta_j
    dstar = _sym01(_m(grid), N) @ H
    dlt = -contract_full(grid, 2, 0, 1) @ H
    T1 = nabla_full(grid, 2, outer) @ dstar  # nabla_k (delta^* theta)_ij
    u = nabla_full(grid, 0, outer) @ dlt  # u_k = nabla_k (delta theta)
    full = (
        2 * (n + 1) * T1
        + 2 * insert_metric(grid, 1, 1, 2) @ u  # 2 g_ij u_k
        + insert_metric(grid, 1, 0, 2) @ u  # g_kj u_i
        + insert_metric(grid, 1, 0, 1) @ u  # g_ki u_j
    )
    return _compress(grid, COV1_SYM2) @ full


@lru_cache(maxsize=32)
def _fourth_difference_stabiliser(grid, r):
    """``2(n+1) h_k^3 (delta_k^2)^2`` per chart axis on working components.

    ``delta_k^2`` is the three-point second difference. The block is
    ``O(h^3)`` on smooth fields and ``O(h^-1)`` on grid-scale oscillations,
    which the centred stencil cannot see. A plain ``h^2 delta^2`` block is
    not enough: it leaves those modes at an ``h``-independent level inside
    the low spectrum. With ``h^2`` in place of ``h^3`` the conformal fields
    with large fourth derivatives are lifted off the kernel on practical
    sphere grids.
    """
    m, N, n = _m(grid), grid.n_nodes, grid.dim
    parts = []
    for k in range(n):
        h = grid.spacing[k]
        d2 = (_diff(grid, k, "+") - _diff(grid, k, "-")) / h
        d4 = h**3 * (d2 @ d2)
        parts.append(2 * (n + 1) * sp.kron(sp.identity(m**r), d4, format="csr"))
    return (sp.vstack(parts, format="csr") @ _to_work(grid, r)).tocsr()


@lru_cache(maxsize=16)
def eisenhart_E(grid):
    """Second-order operator whose kernel solves the Eisenhart equations.

    ``(E theta)_kij = 2(n+1) nabla_k (delta^* theta)_ij + 2 g_ij nabla_k (delta theta)
    + g_kj nabla_i (delta theta) + g_ki nabla_j (delta theta)``.

    The principal block composes centred derivatives. A block of scaled
    fourth differences (see :func:`_fourth_difference_stabiliser`) is stacked
    below it with unit-weight Euclidean mass.
    """
    principal = _eisenhart_flavor(grid, "c", "c")
    stab = _fourth_difference_stabiliser(grid, 1)
    w = np.tile(grid.quad_weights, stab.shape[0] // grid.n_nodes)
    return DiscreteOperator(
        name="eisenhart_E",
        grid=grid,
        domain=ONE_FORM,
        codomain=COV1_SYM2,
        matrix=sp.vstack([principal, stab], format="csr"),
        domain_mass=mass_matrix(grid, ONE_FORM),
        codomain_mass=sp.block_diag([mass_matrix(grid, COV1_SYM2), sp.diags(w)], format="csr"),
        blocks=2,
        convention="delta theta = -g^{ij} nabla_i theta_j; centred differences, fourth-difference stabiliser",
        principal_rows=principal.shape[0],
    )


def eisenhart_E_star(grid, construction="transpose"):
    """Adjoint of :func:`eisenhart_E`.

    ``"transpose"``: weighted transpose (authoritative).
    ``"formula"``: the literal expression
    ``2(n+1) nabla^i nabla^j Phi_jik + 2 nabla_k nabla_i Phi_j^{ji}``.
    ``"corrected"``: integration by parts carried through for all four terms of
    ``E``, ``2(n+1) nabla^i nabla^j Phi_jik - 2 nabla_k nabla^j Phi_j^i_i
    - 2 nabla_k nabla_i Phi_j^{ji}``.
    """
    if construction == "transpose":
        return eisenhart_E(grid).adjoint_matrix()
    Phi = _expand(grid, COV1_SYM2)
    # nabla^i nabla^j Phi_jik, contracting after each derivative so that no
    # rank-5 tensor is formed
    div = contract_full(grid, 4, 0, 1) @ nabla_full(grid, 3, "c")  # (i, k)
    lead = contract_full(grid, 3, 0, 1) @ nabla_full(grid, 2, "c") @ div
    grad_div = nabla_full(grid, 0, "c") @ contract_full(grid, 2, 0, 1) @ nabla_full(grid, 1, "c")
    t = contract_full(grid, 3, 0, 1)  # t_i = Phi^j_{ji}
    n = grid.dim
    if construction == "formula":
        full = 2 * (n + 1) * lead + 2 * grad_div @ t
    elif construction == "corrected":
        u = contract_full(grid, 3, 1, 2)  # u_j = Phi_j^i_i
        full = 2 * (n + 1) * lead - 2 * grad_div @ u - 2 * grad_div @ t
    else:
        raise ValueError(construction)
    return (_compress(grid, ONE_FORM) @ full @ Phi).tocsr()


# --------------------------------------------------------------------------
# normal operators and Laplacians


def normal_operator(D):
    """``D^* D`` as the pencil ``(D^T M_cod D, M_dom)``."""
    B = D.codomain_mass @ D.matrix
    A = (D.matrix.T @ B).tocsr()
    return NormalOperator(
        name=f"{D.name}^*{D.name}", grid=D.grid, domain=D.domain, A=A, M=D.domain_mass, factor=D
    )


def sinjukov_closed_form(grid):
    """Centred discretisation of ``rough Laplacian phi + (nabla_i div_j + nabla_j div_i)/(n+1)``."""
    n, N = grid.dim, grid.n_nodes
    G2 = nabla_full(grid, 2, "c")
    rough = -contract_full(grid, 4, 0, 1) @ nabla_full(grid, 3, "c") @ G2
    div = contract_full(grid, 3, 0, 1) @ G2
    grad_div = 2.0 * _sym01(_m(grid), N) @ nabla_full(grid, 1, "c") @ div / (n + 1)
    return (_compress(grid, SYM2) @ (rough + grad_div) @ _expand(grid, SYM2)).tocsr()


def rough_laplacian(grid):
    """``nabla^* nabla`` on one-forms as a pencil."""
    return normal_operator(covariant_derivative(grid, 1))


def hodge_laplacian_1forms(grid):
    """Hodge Laplacian on one-forms via ``nabla^* nabla + Ric``.

    The Ricci term is contracted from the grid's Riemann tensor.
    """
    rough = rough_laplacian(grid)
    ginv = grid.metric_inv
    ric_up = np.einsum("xia,xab,xbj->xij", ginv, grid.ricci, ginv)
    R = pointwise(ric_up * grid.quad_weights[:, None, None])
    return NormalOperator(
        name="hodge_laplacian", grid=grid, domain=ONE_FORM, A=(rough.A + R).tocsr(), M=rough.M
    )


def integral_identity_residual(grid, phi):
    """Quadrature of ``K(phi, phi) + nabla^k phi^ij nabla_i phi_kj - |div phi|^2``.

    ``K(phi, phi) = sum_{i<j} sec(e_i, e_j) (rho_i - rho_j)^2`` uses the
    ``g``-orthonormal eigenframe of ``phi`` at each node.
    """
    if phi.valence.symmetry != "sym2":
        raise InvalidField("integral identity needs a sym2 field")
    F = phi.full()
    if not np.all(np.isfinite(F)):
        raise InvalidField("non-finite components")
    if not np.allclose(F, np.swapaxes(F, 1, 2), rtol=0, atol=1e-12 * max(1.0, np.abs(F).max())):
        raise InvalidField("field is not symmetric")
    n, N = grid.dim, grid.n_nodes
    g, ginv = grid.metric, grid.metric_inv
    dphi = (nabla_chart(grid, 2, "c") @ F.reshape(N, -1).T.ravel()).reshape(n**3, N).T
    dphi = dphi.reshape(N, n, n, n)  # (k, i, j)
    up = np.einsum("xka,xib,xjc,xabc->xkij", ginv, ginv, ginv, dphi)
    cross = np.einsum("xkij,xikj->x", up, dphi)
    div = np.einsum("xki,xkij->xj", ginv, dphi)
    div2 = np.einsum("xj,xjl,xl->x", div, ginv, div)
    Lc = np.linalg.cholesky(g)
    Li = np.linalg.inv(Lc)
    hat = Li @ F @ np.swapaxes(Li, 1, 2)
    rho, V = np.linalg.eigh(hat)
    E = np.swapaxes(Li, 1, 2) @ V  # columns are g-orthonormal eigenvectors
    K = np.zeros(N)
    if grid.curvature:
        R = grid.riemann
        for i in range(n):
            for j in range(i + 1, n):
                ei, ej = E[:, :, i], E[:, :, j]
                sec = np.einsum("xabcd,xa,xb,xc,xd->x", R, ei, ej, ei, ej)
                K += sec * (rho[:, i] - rho[:, j]) ** 2
    return float(np.sum(grid.quad_weights * (K + cross - div2)))
