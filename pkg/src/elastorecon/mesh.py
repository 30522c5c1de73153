"""Structured quad meshes, Gauss-Lobatto nodal bases and quadrature rules."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as npleg

CONFORMING = "conforming"
BROKEN = "broken"


@dataclass(frozen=True)
class MeshSpec:
    """Uniform ``nx`` by ``ny`` partition of an axis-aligned rectangle.

    Elements are numbered lexicographically, ``e = j * nx + i`` with ``i``
    the column (x) index and ``j`` the row (y) index.
    """

    domain: tuple = (0.0, 1.0, 0.0, 1.0)
    nx: int = 1
    ny: int = 1

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"element counts must be positive integers, got nx={self.nx}, ny={self.ny}")
        x0, x1, y0, y1 = self.domain
        if not (x1 > x0 and y1 > y0):
            raise ValueError(f"degenerate domain {self.domain}")
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))

    @property
    def hx(self):
        return (self.domain[1] - self.domain[0]) / self.nx

    @property
    def hy(self):
        return (self.domain[3] - self.domain[2]) / self.ny

    @property
    def h(self):
        """Largest element side."""
        return max(self.hx, self.hy)

    @property
    def n_elements(self):
        return self.nx * self.ny

    @property
    def area(self):
        x0, x1, y0, y1 = self.domain
        return (x1 - x0) * (y1 - y0)

    def element_areas(self):
        return np.full(self.n_elements, self.hx * self.hy)

    def element_index(self, i, j):
        return j * self.nx + i

    def element_ij(self, e):
        e = np.asarray(e)
        return e % self.nx, e // self.nx

    def element_origin(self, e):
        i, j = self.element_ij(e)
        return self.domain[0] + i * self.hx, self.domain[2] + j * self.hy

    def vertices(self):
        """Vertex coordinates, lexicographic with x fastest."""
        xs = np.linspace(self.domain[0], self.domain[1], self.nx + 1)
        ys = np.linspace(self.domain[2], self.domain[3], self.ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def connectivity(self):
        """Element-to-vertex table, counter-clockwise from the lower-left corner."""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        i, j = i.ravel(), j.ravel()
        w = self.nx + 1
        v0 = j * w + i
        return np.column_stack([v0, v0 + 1, v0 + w + 1, v0 + w])

    def coarsen(self, k):
        """Mesh whose elements are ``k`` by ``k`` blocks of this one."""
        k = int(k)
        if k < 1 or self.nx % k or self.ny % k:
            raise ValueError(f"coarsening factor {k} must divide nx={self.nx} and ny={self.ny}")
        return MeshSpec(self.domain, self.nx // k, self.ny // k)

    def locate(self, points):
        """Owner element indices and reference coordinates of ``points``.

        A point on an inter-element edge belongs to the element with the
        larger lexicographic index (the element to its upper right), except on
        the outer top/right boundary.
        """
        p = np.atleast_2d(np.asarray(points, dtype=float))
        x0, x1, y0, y1 = self.domain
        tol = 1e-12 * max(x1 - x0, y1 - y0)
        if np.any((p[:, 0] < x0 - tol) | (p[:, 0] > x1 + tol) | (p[:, 1] < y0 - tol) | (p[:, 1] > y1 + tol)):
            raise ValueError("point outside domain")
        sx = (p[:, 0] - x0) / self.hx
        sy = (p[:, 1] - y0) / self.hy
        i = np.clip(np.floor(sx).astype(np.int64), 0, self.nx - 1)
        j = np.clip(np.floor(sy).astype(np.int64), 0, self.ny - 1)
        xi = np.clip(2.0 * (sx - i) - 1.0, -1.0, 1.0)
        eta = np.clip(2.0 * (sy - j) - 1.0, -1.0, 1.0)
        return j * self.nx + i, xi, eta


def build_mesh(domain=(0.0, 1.0, 0.0, 1.0), nx=1, ny=None):
    return MeshSpec(tuple(domain), nx, nx if ny is None else ny)


@dataclass(frozen=True)
class QuadratureRule:
    """1D rule on [-1, 1] with its polynomial exactness degree."""

    points: np.ndarray
    weights: np.ndarray
    degree: int

    def tensor(self):
        """2D tensor rule; point index ``qy * n + qx``."""
        X, Y = np.meshgrid(self.points, self.points)
        W = np.outer(self.weights, self.weights)
        return np.column_stack([X.ravel(), Y.ravel()]), W.ravel()


@lru_cache(maxsize=None)
def gauss_rule(n):
    """n-point Gauss-Legendre rule, exact to degree 2n-1."""
    if n < 1:
        raise ValueError("need at least one point")
    x, w = npleg.leggauss(n)
    return QuadratureRule(x, w, 2 * n - 1)


@lru_cache(maxsize=None)
def gll_points(r):
    if r < 1:
        raise ValueError("Gauss-Lobatto nodes need r >= 1")
    if r == 1:
        x = np.array([-1.0, 1.0])
    else:
        interior = npleg.Legendre.basis(r).deriv().roots()
        x = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
    pr = npleg.legval(x, np.eye(r + 1)[r])
    w = 2.0 / (r * (r + 1) * pr**2)
    return x, w


def gll_rule(r):
    """(r+1)-point Gauss-Lobatto rule, exact to degree 2r-1."""
    x, w = gll_points(r)
    return QuadratureRule(x, w, 2 * r - 1)


@dataclass(frozen=True)
class GLLBasis:
    """Lagrange basis on the r+1 Gauss-Lobatto nodes of [-1, 1]."""

    r: int
    nodes: np.ndarray
    weights: np.ndarray        # quadrature weights
    bary: np.ndarray           # barycentric weights
    D: np.ndarray = field(repr=False)  # D[i, j] = l_j'(x_i)

    def eval(self, x):
        """Matrix ``V[p, j] = l_j(x_p)``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        diff = x[:, None] - self.nodes[None, :]
        hit = np.isclose(diff, 0.0, atol=1e-14, rtol=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = self.bary[None, :] / diff
            V = t / t.sum(axis=1, keepdims=True)
        rows = hit.any(axis=1)
        V[rows] = hit[rows].astype(float)
        return V

    def eval_deriv(self, x):
        """Matrix ``V'[p, j] = l_j'(x_p)``: derivative via nodal differentiation."""
        return self.eval(x) @ self.D

    def eval_deriv2(self, x):
        return self.eval(x) @ (self.D @ self.D)


@lru_cache(maxsize=None)
def gll_basis(r):
    if r < 1:
        raise ValueError("nodal differentiation needs r >= 1")
    x, w = gll_points(r)
    n = r + 1
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    bary = 1.0 / diff.prod(axis=1)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                D[i, j] = bary[j] / bary[i] / (x[i] - x[j])
        D[i, i] = -D[i].sum()
    return GLLBasis(r, x, w, bary, D)


@dataclass(frozen=True)
class FeSpace:
    """Tensor-product Q^r space on a structured mesh.

    Conforming spaces are nodal on Gauss-Lobatto points with global node
    ``(I, J)`` numbered ``J * (r * nx + 1) + I``. Broken spaces carry
    ``(r+1)^2`` Legendre coefficients per element.
    """

    mesh: MeshSpec
    r: int
    continuity: str = CONFORMING

    def __post_init__(self):
        if self.continuity not in (CONFORMING, BROKEN):
            raise ValueError(f"unknown continuity {self.continuity!r}")
        if self.r < (1 if self.continuity == CONFORMING else 0):
            raise ValueError(f"order {self.r} invalid for a {self.continuity} space")

    @property
    def nnx(self):
        return self.r * self.mesh.nx + 1

    @property
    def nny(self):
        return self.r * self.mesh.ny + 1

    @property
    def dof_count(self):
        if self.continuity == CONFORMING:
            return self.nnx * self.nny
        return self.mesh.n_elements * (self.r + 1) ** 2

    @property
    def basis(self):
        return gll_basis(self.r)

    def node_coords_1d(self):
        m = self.mesh
        ref = (self.basis.nodes + 1.0) / 2.0
        xs = (np.arange(m.nx)[:, None] + ref[None, :-1]).ravel()
        ys = (np.arange(m.ny)[:, None] + ref[None, :-1]).ravel()
        xs = m.domain[0] + m.hx * np.append(xs, m.nx)
        ys = m.domain[2] + m.hy * np.append(ys, m.ny)
        return xs, ys

    def node_coords(self):
        xs, ys = self.node_coords_1d()
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def element_dofs(self):
        """Global node of local node ``b * (r+1) + a`` in each element."""
        m, r = self.mesh, self.r
        i, j = m.element_ij(np.arange(m.n_elements))
        a = np.arange(r + 1)
        I = i[:, None, None] * r + a[None, None, :]
        J = j[:, None, None] * r + a[None, :, None]
        return (J * self.nnx + I).reshape(m.n_elements, (r + 1) ** 2)

    def boundary_dofs(self):
        I, J = np.meshgrid(np.arange(self.nnx), np.arange(self.nny))
        on = (I == 0) | (J == 0) | (I == self.nnx - 1) | (J == self.nny - 1)
        return np.flatnonzero(on.ravel())

    def interior_dofs(self):
        mask = np.ones(self.dof_count, dtype=bool)
        mask[self.boundary_dofs()] = False
        return np.flatnonzero(mask)

    def quadrature_points(self):
        """Physical Gauss-Lobatto quadrature points, shape (ne, nq, 2), and weights (ne, nq)."""
        m = self.mesh
        ref, w = gll_rule(self.r).tensor()
        ox, oy = m.element_origin(np.arange(m.n_elements))
        X = ox[:, None] + (ref[None, :, 0] + 1.0) * m.hx / 2.0
        Y = oy[:, None] + (ref[None, :, 1] + 1.0) * m.hy / 2.0
        J = m.hx * m.hy / 4.0
        return np.stack([X, Y], axis=-1), np.broadcast_to(w * J, X.shape).copy()
