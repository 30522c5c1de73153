"""Fields on FE spaces, evaluation, interpolation and global assembly."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre as npleg

from . import kernels
from .mesh import BROKEN, CONFORMING, FeSpace, gauss_rule, gll_basis


@dataclass
class Field:
    """Coefficients of an ``ncomp``-component field, shape ``(ncomp, dof_count)``.

    Conforming coefficients are nodal values; broken ones are tensor Legendre
    coefficients, ``(r+1)^2`` per element with local index ``b * (r+1) + a``
    for ``P_a(xi) P_b(eta)``.
    """

    space: FeSpace
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[None, :]
        if v.shape[1] != self.space.dof_count:
            raise ValueError(f"field has {v.shape[1]} dofs per component, space expects {self.space.dof_count}")
        self.values = v

    @property
    def ncomp(self):
        return self.values.shape[0]

    def component(self, k):
        return Field(self.space, self.values[k:k + 1].copy())

    def grid(self, k=0):
        """Nodal values of component ``k`` as a ``(nny, nnx)`` array."""
        s = self.space
        return self.values[k].reshape(s.nny, s.nnx)

    def __add__(self, other):
        return Field(self.space, self.values + other.values)

    def __sub__(self, other):
        return Field(self.space, self.values - other.values)

    def __mul__(self, s):
        return Field(self.space, self.values * s)

    __rmul__ = __mul__


def interpolate(func, space, ncomp=None):
    """Nodal interpolant of ``func(x, y)`` on a conforming space."""
    if space.continuity != CONFORMING:
        raise ValueError("nodal interpolation needs a conforming space")
    xy = space.node_coords()
    vals = np.asarray(func(xy[:, 0], xy[:, 1]), dtype=float)
    if vals.ndim == 0:
        vals = np.full(len(xy), float(vals))
    vals = np.atleast_2d(vals) if vals.ndim == 1 else vals
    if ncomp is not None and vals.shape[0] != ncomp:
        raise ValueError(f"expected {ncomp} components, got {vals.shape[0]}")
    return Field(space, np.broadcast_to(vals, (vals.shape[0], len(xy))).copy())


def constant_field(space, *consts):
    return Field(space, np.tile(np.asarray(consts, dtype=float)[:, None], (1, space.dof_count)))


# Legendre tools for broken spaces -------------------------------------------------

def legendre_vander(x, r, deriv=0):
    """``V[p, a] = d^deriv P_a(x_p)`` for ``a = 0..r``."""
    x = np.asarray(x, dtype=float)
    V = np.empty((x.size, r + 1))
    eye = np.eye(r + 1)
    for a in range(r + 1):
        c = npleg.legder(eye[a], deriv) if deriv else eye[a]
        V[:, a] = npleg.legval(x.ravel(), c) if len(c) else 0.0
    return V


def legendre_mass_inverse(r):
    """Inverse diagonal of the 1D Legendre mass matrix on [-1, 1]."""
    return (2 * np.arange(r + 1) + 1) / 2.0


# Evaluation -----------------------------------------------------------------------

def _ref_matrices(space, xi, eta, derivs):
    """1D basis matrices along each axis for the requested derivative orders."""
    if space.continuity == CONFORMING:
        b = space.basis
        ops = {0: b.eval, 1: b.eval_deriv, 2: b.eval_deriv2}
        return {d: (ops[d](xi), ops[d](eta)) for d in derivs}
    r = space.r
    return {d: (legendre_vander(xi, r, d), legendre_vander(eta, r, d)) for d in derivs}


def _local_coeffs(field, elems):
    s = field.space
    n = s.r + 1
    if s.continuity == CONFORMING:
        dofs = s.element_dofs()[elems]
        c = field.values[:, dofs]
    else:
        c = field.values.reshape(field.ncomp, s.mesh.n_elements, n * n)[:, elems]
    return c.reshape(field.ncomp, len(elems), n, n)  # [k, p, b, a]


def evaluate_field(field, points, derivatives=0):
    """Evaluate at physical points.

    Returns values ``(ncomp, npts)``; with ``derivatives=1`` also gradients
    ``(ncomp, npts, 2)``; with ``derivatives=2`` also hessians
    ``(ncomp, npts, 2, 2)``. Points on element interfaces use the owner
    rule of :meth:`MeshSpec.locate`.
    """
    s = field.space
    m = s.mesh
    elems, xi, eta = m.locate(points)
    mats = _ref_matrices(s, xi, eta, range(derivatives + 1))
    C = _local_coeffs(field, elems)
    sx, sy = 2.0 / m.hx, 2.0 / m.hy

    def ev(dx, dy):
        return np.einsum("pa,kpba,pb->kp", mats[dx][0], C, mats[dy][1]) * sx**dx * sy**dy

    vals = ev(0, 0)
    if derivatives == 0:
        return vals
    grad = np.stack([ev(1, 0), ev(0, 1)], axis=-1)
    if derivatives == 1:
        return vals, grad
    hxy = ev(1, 1)
    hess = np.stack([np.stack([ev(2, 0), hxy], -1), np.stack([hxy, ev(0, 2)], -1)], -2)
    return vals, grad, hess


def values_at_quadrature(field):
    """Nodal field values at the Gauss-Lobatto quadrature points, shape (ncomp, ne, nq)."""
    s = field.space
    if s.continuity != CONFORMING:
        raise ValueError("conforming field expected")
    return field.values[:, s.element_dofs()]


def gradients_at_quadrature(field):
    """Gradients at Gauss-Lobatto quadrature points, shape (ncomp, ne, nq, 2)."""
    s = field.space
    Gx, Gy = reference_gradients(s)
    loc = values_at_quadrature(field)
    return np.stack([loc @ Gx.T, loc @ Gy.T], axis=-1)


# Assembly -------------------------------------------------------------------------

def reference_gradients(space):
    """Physical derivative matrices on one element, ``Gx[q, l] = d phi_l / dx (x_q)``."""
    b = space.basis
    n = space.r + 1
    I = np.eye(n)
    Gx = np.kron(I, b.D) * (2.0 / space.mesh.hx)
    Gy = np.kron(b.D, I) * (2.0 / space.mesh.hy)
    return Gx, Gy


def scatter(space, element_matrices, ncomp=1):
    """Global sparse matrix from element matrices with blocks ordered by component."""
    ndof = space.dof_count
    dofs = space.element_dofs()
    ld = np.concatenate([dofs + k * ndof for k in range(ncomp)], axis=1)
    nl = ld.shape[1]
    if element_matrices.shape[1:] != (nl, nl):
        raise ValueError(f"element matrices {element_matrices.shape[1:]} do not match {nl} local dofs")
    rows = np.repeat(ld, nl, axis=1).ravel()
    cols = np.tile(ld, (1, nl)).ravel()
    N = ncomp * ndof
    A = sp.coo_matrix((element_matrices.ravel(), (rows, cols)), shape=(N, N)).tocsr()
    A.sum_duplicates()
    return A


def scatter_vector(space, element_vectors, ncomp=1):
    ndof = space.dof_count
    dofs = space.element_dofs()
    ld = np.concatenate([dofs + k * ndof for k in range(ncomp)], axis=1)
    return np.bincount(ld.ravel(), weights=element_vectors.ravel(), minlength=ncomp * ndof)


@dataclass
class ElementOperator:
    """Per-quadrature-point row coefficients for :func:`kernels.element_gram`."""

    Aval: np.ndarray
    Adx: np.ndarray
    Ady: np.ndarray
    wdiag: np.ndarray

    @classmethod
    def zeros(cls, ne, nq, nc, nf):
        z = lambda: np.zeros((ne, nq, nc, nf))
        return cls(z(), z(), z(), np.ones((ne, nq, nc)))

    @property
    def nfields(self):
        return self.Aval.shape[3]


def element_matrices(space, op, backend=None):
    Gx, Gy = reference_gradients(space)
    _, qw = space.quadrature_points()
    return kernels.element_gram(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, backend=backend)


def assemble_bilinear(space, local_kernel, backend=None):
    """Assemble the symmetric form described by ``local_kernel(space) -> ElementOperator``."""
    op = local_kernel(space)
    return scatter(space, element_matrices(space, op, backend=backend), op.nfields)


def assemble_load(space, op, g, backend=None):
    """Global vector ``sum_q w_q B_q^T diag(wdiag_q) g_q`` for point data ``g`` (ne, nq, nc)."""
    Gx, Gy = reference_gradients(space)
    _, qw = space.quadrature_points()
    ev = kernels.element_load(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, g, backend=backend)
    return scatter_vector(space, ev, op.nfields)


def mass_kernel(coef=None):
    """Scalar mass form ``int coef u v`` (lumped by Gauss-Lobatto collocation)."""
    def kernel(space):
        ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
        op = ElementOperator.zeros(ne, nq, 1, 1)
        op.Aval[..., 0, 0] = 1.0
        if coef is not None:
            op.wdiag[..., 0] = coef
        return op
    return kernel


def stiffness_kernel(coef=None):
    """Scalar stiffness form ``int coef grad u . grad v``."""
    def kernel(space):
        ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
        op = ElementOperator.zeros(ne, nq, 2, 1)
        op.Adx[..., 0, 0] = 1.0
        op.Ady[..., 1, 0] = 1.0
        if coef is not None:
            op.wdiag[...] = np.asarray(coef)[..., None]
        return op
    return kernel


# Norms ----------------------------------------------------------------------------

def sobolev_sq(field, nquad=None):
    """Squared L2 norm and H1 seminorm of each component by tensor Gauss quadrature.

    Returns two arrays of shape ``(ncomp,)``. The default ``r + 2`` points
    integrate squared Q^r gradients exactly.
    """
    s = field.space
    if s.continuity != CONFORMING:
        raise ValueError("conforming field expected")
    n = nquad or s.r + 2
    g = gauss_rule(n)
    b = gll_basis(s.r)
    V, Dv = b.eval(g.points), b.eval_deriv(g.points)
    m = s.mesh
    loc = values_at_quadrature(field).reshape(field.ncomp, m.n_elements, s.r + 1, s.r + 1)
    val = np.einsum("xa,kpba,yb->kpyx", V, loc, V)
    dx = np.einsum("xa,kpba,yb->kpyx", Dv, loc, V) * (2.0 / m.hx)
    dy = np.einsum("xa,kpba,yb->kpyx", V, loc, Dv) * (2.0 / m.hy)
    W = np.outer(g.weights, g.weights) * (m.hx * m.hy / 4.0)
    l2 = np.einsum("kpyx,yx->k", val**2, W)
    h1 = np.einsum("kpyx,yx->k", dx**2 + dy**2, W)
    return l2, h1
