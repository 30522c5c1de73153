"""Regularized differentiation by local L2 projection onto coarse broken spaces.

Data on the fine space are projected element by element onto tensor Q^r
polynomials of a coarse mesh whose elements are ``k x k`` blocks of fine
elements. Strains and hessians are the exact derivatives of the projected
polynomials, sampled at the Gauss-Lobatto quadrature points of the fine
elements. Because coarse and fine meshes are nested, the projection pairing is
integrated exactly by (max(r_src, r)+1)-point Gauss rules on each fine element.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fem import Field, legendre_mass_inverse, legendre_vander
from .mesh import BROKEN, CONFORMING, FeSpace, gauss_rule, gll_basis


@dataclass(frozen=True)
class ProjectionPlan:
    """Fine source space, coarsening factor ``k`` and target order ``r``."""

    source: FeSpace
    k: int
    r: int

    def __post_init__(self):
        if self.r < 0:
            raise ValueError("projection order must be nonnegative")
        self.source.mesh.coarsen(self.k)  # validates nesting

    @property
    def target(self):
        return FeSpace(self.source.mesh.coarsen(self.k), self.r, BROKEN)

    @property
    def h(self):
        return self.target.mesh.h

    @property
    def quadrature(self):
        return gauss_rule(max(self.source.r, self.r) + 1)


def _sub_coords(k, ref_points):
    """Coarse reference coordinates of fine reference points in each of the ``k`` sub-intervals."""
    s = np.arange(k)[:, None]
    return -1.0 + (2.0 * s + 1.0 + ref_points[None, :]) / k  # (k, npts)


def _source_values(field, pts):
    """Field values at the tensor grid ``pts x pts`` of every source element, (ncomp, ny, nx, n, n)."""
    s = field.space
    m = s.mesh
    n = s.r + 1
    if s.continuity == CONFORMING:
        L = gll_basis(s.r).eval(pts)
        loc = field.values[:, s.element_dofs()]
    else:
        L = legendre_vander(pts, s.r)
        loc = field.values.reshape(field.ncomp, m.n_elements, n * n)
    loc = loc.reshape(field.ncomp, m.ny, m.nx, n, n)
    return np.einsum("xa,kjiba,yb->kjiyx", L, loc, L, optimize=True)


def l2_project(field, plan):
    """Element-wise L2 projection onto the plan's broken target space."""
    if field.space != plan.source:
        raise ValueError("field does not live on the plan's source space")
    q = plan.quadrature
    k, r = plan.k, plan.r
    G = _source_values(field, q.points)  # (kc, ny, nx, ng, ng)
    ng = len(q.points)
    tm = plan.target.mesh
    eta = _sub_coords(k, q.points)
    P = legendre_vander(eta.ravel(), r).reshape(k, ng, r + 1)
    P = P * (q.weights / k)[None, :, None] * legendre_mass_inverse(r)[None, None, :]
    G = G.reshape(field.ncomp, tm.ny, k, tm.nx, k, ng, ng)
    C = np.einsum("sxa,kJtIsyx,tyb->kJIba", P, G, P, optimize=True)
    return Field(plan.target, C.reshape(field.ncomp, -1))


def project_function(func, mesh, r, nquad=None, ncomp=None):
    """L2 projection of ``func(x, y)`` onto broken Q^r on ``mesh`` by Gauss quadrature."""
    nq = nquad or r + 4
    g = gauss_rule(nq)
    ox = mesh.domain[0] + (np.arange(mesh.nx)[:, None] + (g.points[None, :] + 1) / 2) * mesh.hx
    oy = mesh.domain[2] + (np.arange(mesh.ny)[:, None] + (g.points[None, :] + 1) / 2) * mesh.hy
    X, Y = np.meshgrid(ox.ravel(), oy.ravel())
    vals = np.asarray(func(X, Y), dtype=float)
    if vals.ndim == 2:
        vals = vals[None]
    P = legendre_vander(g.points, r) * g.weights[:, None] * legendre_mass_inverse(r)[None, :]
    V = vals.reshape(vals.shape[0], mesh.ny, nq, mesh.nx, nq)
    C = np.einsum("xa,kjyix,yb->kjiba", P, V, P, optimize=True)
    return Field(FeSpace(mesh, r, BROKEN), C.reshape(vals.shape[0], -1))


def sample_on_fine(broken, fine_space, dx=0, dy=0):
    """Partial derivative ``d^dx/dx d^dy/dy`` of a coarse broken field at the Gauss-Lobatto
    quadrature points of a nested conforming fine space; shape (ncomp, ne_fine, nq)."""
    cs = broken.space
    fm = fine_space.mesh
    k = fm.nx // cs.mesh.nx
    if k * cs.mesh.nx != fm.nx or k * cs.mesh.ny != fm.ny:
        raise ValueError("fine mesh is not nested in the coarse mesh")
    r = cs.r
    nodes = gll_basis(fine_space.r).nodes
    n = len(nodes)
    eta = _sub_coords(k, nodes).ravel()
    Vx = legendre_vander(eta, r, dx).reshape(k, n, r + 1) * (2.0 / cs.mesh.hx) ** dx
    Vy = legendre_vander(eta, r, dy).reshape(k, n, r + 1) * (2.0 / cs.mesh.hy) ** dy
    C = broken.values.reshape(broken.ncomp, cs.mesh.ny, cs.mesh.nx, r + 1, r + 1)
    out = np.einsum("sqa,kJIba,tpb->kJtpIsq", Vx, C, Vy, optimize=True)
    out = out.reshape(broken.ncomp, fm.ny, n, fm.nx, n).transpose(0, 1, 3, 2, 4)
    return out.reshape(broken.ncomp, fm.n_elements, n * n)


@dataclass
class StrainField:
    """Symmetric gradient at fine quadrature points, ``values`` (ne, nq, 3) as (xx, yy, xy)."""

    values: np.ndarray
    k: int
    r: int
    projection: Field


@dataclass
class HessianField:
    """Second derivatives at fine quadrature points, ``values`` (ne, nq, 2, 2, 2) indexed [k, i, j]."""

    values: np.ndarray
    k: int
    r: int
    projection: Field


def strain_from_projection(u, k, r=None):
    """Strain of the coarse projection of the vector field ``u`` (coarsening ``k``)."""
    r = u.space.r if r is None else r
    if r < 1:
        raise ValueError("strain needs r >= 1")
    proj = l2_project(u, ProjectionPlan(u.space, k, r))
    dx = sample_on_fine(proj, u.space, 1, 0)
    dy = sample_on_fine(proj, u.space, 0, 1)
    eps = np.stack([dx[0], dy[1], 0.5 * (dy[0] + dx[1])], axis=-1)
    return StrainField(eps, k, r, proj)


def hessian_from_projection(u, k, r=None):
    """Hessian slices of the coarse projection of ``u``; requires ``r >= 2``."""
    r = u.space.r if r is None else r
    if r < 2:
        raise ValueError("second derivatives of degree < 2 projections vanish; need r >= 2")
    proj = l2_project(u, ProjectionPlan(u.space, k, r))
    xx = sample_on_fine(proj, u.space, 2, 0)
    xy = sample_on_fine(proj, u.space, 1, 1)
    yy = sample_on_fine(proj, u.space, 0, 2)
    H = np.stack([np.stack([xx, xy], -1), np.stack([xy, yy], -1)], -2)  # (kc, ne, nq, 2, 2)
    return HessianField(np.moveaxis(H, 0, 2), k, r, proj)


def admissible_factors(nx, ny=None):
    ny = nx if ny is None else ny
    return [k for k in range(1, min(nx, ny) + 1) if nx % k == 0 and ny % k == 0]


def snap_factor(h, h0, nx, ny=None):
    """Admissible ``k`` whose ``k * h0`` is closest to ``h`` in log scale, and a warning or None."""
    ks = admissible_factors(nx, ny)
    ideal = h / h0
    if ideal <= 1:
        return 1, (None if ideal == 1 else f"ideal size {h:.3e} is below the data grid size {h0:.3e}; using k=1")
    if ideal >= ks[-1]:
        return ks[-1], f"ideal size {h:.3e} exceeds the domain; using one element per axis"
    k = min(ks, key=lambda k: (abs(math.log(k / ideal)), k))
    return k, None


@dataclass(frozen=True)
class MeshSizeChoice:
    h1_ideal: float
    h2_ideal: float
    k1: int
    k2: int
    h1: float
    h2: float


def choose_mesh_sizes(delta, ell=3, d=2, h0=None, nx=None, ny=None, scale=1.0):
    """Projection sizes ``h1 = scale * delta^(1/(ell - d/2))`` and ``h2 = scale * delta^(1/ell)``.

    Parameters
    ----------
    delta : float
        Noise level, > 0.
    ell : int
        Assumed smoothness of the displacement fields, >= 3.
    h0, nx, ny : optional
        Fine grid size and element counts. When given, both sizes are snapped
        to the admissible ``k * h0`` nearest in log scale.
    scale : float
        Constant in front of both power laws. Only the exponents are fixed by
        the error balance; ``scale`` sets where the balance sits on a given grid.
    """
    if delta <= 0:
        raise ValueError("noise level must be positive")
    if ell < 3:
        raise ValueError("need ell >= 3")
    if scale <= 0:
        raise ValueError("scale must be positive")
    h1 = scale * delta ** (1.0 / (ell - d / 2.0))
    h2 = scale * delta ** (1.0 / ell)
    if h0 is None:
        return MeshSizeChoice(h1, h2, 0, 0, h1, h2)
    k1, w1 = snap_factor(h1, h0, nx, ny)
    k2, w2 = snap_factor(h2, h0, nx, ny)
    for w in (w1, w2):
        if w:
            warnings.warn(w, stacklevel=2)
    return MeshSizeChoice(h1, h2, k1, k2, k1 * h0, k2 * h0)
