"""Recovery of (alpha, beta): least-squares normal equations and integration along curves."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .differentiation import hessian_from_projection, strain_from_projection
from .fem import (ElementOperator, Field, assemble_load, element_matrices, evaluate_field, interpolate, scatter,
                  sobolev_sq, values_at_quadrature)
from .operators import GradientSystemData, PointwiseKinematics, build_gradient_system
from .solvers import cg, lanczos_extremes

log = logging.getLogger(__name__)


# Data preparation -----------------------------------------------------------------

def measured_kinematics(u1, u2, k1=1, k2=None, r=None):
    """Strains (coarsening ``k1``), hessians (``k2``) and values of both fields at the
    fine quadrature points; arrays have leading shape (ne, nq)."""
    k2 = k1 if k2 is None else k2
    e1, e2 = strain_from_projection(u1, k1, r), strain_from_projection(u2, k1, r)
    H1, H2 = hessian_from_projection(u1, k2, r), hessian_from_projection(u2, k2, r)
    pts, _ = u1.space.quadrature_points()
    return PointwiseKinematics(e1.values, e2.values, H1.values, H2.values,
                               np.moveaxis(values_at_quadrature(u1), 0, -1),
                               np.moveaxis(values_at_quadrature(u2), 0, -1), pts)


# Lifting --------------------------------------------------------------------------

@dataclass
class LiftingPair:
    alpha: Field
    beta: Field

    @property
    def vector(self):
        return np.concatenate([self.alpha.values[0], self.beta.values[0]])


def build_lifting(alpha_trace, beta_trace, space):
    """Discrete lifting: boundary nodal values of the traces, zero at interior nodes.

    Traces are callables ``(x, y) -> values`` or conforming fields on ``space``.
    """
    bnd = space.boundary_dofs()
    xy = space.node_coords()

    def lift(tr):
        v = np.zeros(space.dof_count)
        if isinstance(tr, Field):
            v[bnd] = tr.values[0, bnd]
        else:
            v[bnd] = np.broadcast_to(np.asarray(tr(xy[bnd, 0], xy[bnd, 1]), dtype=float), bnd.shape)
        return Field(space, v)

    return LiftingPair(lift(alpha_trace), lift(beta_trace))


# Normal equations -----------------------------------------------------------------

def least_squares_operator(gsd, space):
    """Rows of ``L(alpha, beta)``: (d_x alpha, d_y alpha, d_x beta, d_y beta) + M (alpha, beta)."""
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    M = np.reshape(gsd.M, (ne, nq, 4, 2))
    op = ElementOperator.zeros(ne, nq, 4, 2)
    op.Adx[..., 0, 0] = 1.0
    op.Ady[..., 1, 0] = 1.0
    op.Adx[..., 2, 1] = 1.0
    op.Ady[..., 3, 1] = 1.0
    op.Aval[...] = M
    return op


@dataclass
class NormalSystem:
    """``K x = rhs`` for the zero-trace unknowns stacked as (alpha, beta) interior dofs."""

    K: object
    rhs: np.ndarray
    free: np.ndarray
    space: object
    lifting: LiftingPair
    K_full: object
    load: np.ndarray

    def expand(self, x):
        """Full (alpha, beta) coefficient vector ``x + lifting``."""
        full = self.lifting.vector.copy()
        full[self.free] += x
        n = self.space.dof_count
        return Field(self.space, full[:n]), Field(self.space, full[n:])


def assemble_normal_system(gsd, space, lifting, backend=None):
    """Galerkin matrix of ``||L(a, b)||^2`` on zero-trace pairs and the weak-form right-hand side
    ``<f - L(lifting), L(test)>``."""
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    if np.size(gsd.M) != ne * nq * 8:
        raise ValueError("gradient-system data must be given at every quadrature point of the space")
    op = least_squares_operator(gsd, space)
    K = scatter(space, element_matrices(space, op, backend=backend), 2)
    F = assemble_load(space, op, np.reshape(gsd.f, (ne, nq, 4)), backend=backend)
    interior = space.interior_dofs()
    free = np.concatenate([interior, interior + space.dof_count])
    rhs = F - K @ lifting.vector
    return NormalSystem(K[free][:, free].tocsr(), rhs[free], free, space, lifting, K, F)


@dataclass
class ReconstructionResult:
    alpha: Field
    beta: Field
    iterations: int
    residual: float


def solve_least_squares(system, cg_tol=1e-10, max_iter=None, precond="none"):
    res = cg(system.K, system.rhs, tol=cg_tol, maxiter=max_iter, precond=precond)
    a, b = system.expand(res.x)
    return ReconstructionResult(a, b, res.iterations, res.residual)


def min_ritz_value(system, steps=20, seed=0):
    """Smallest Lanczos Ritz value of the normal matrix."""
    return lanczos_extremes(system.K, steps, seed)[0]


def reconstruct(u1, u2, lifting, k1=1, k2=None, omega1=0.0, omega2=0.0, rho=1.0, c0=1e-8, policy="abort",
                cg_tol=1e-10, precond="none", max_iter=None, backend=None):
    """Differentiate, build the gradient system, assemble and solve. Returns (result, gsd, system)."""
    space = u1.space
    kin = measured_kinematics(u1, u2, k1, k2)
    gsd = build_gradient_system(kin, omega1, omega2, rho, c0, policy, backend=backend)
    system = assemble_normal_system(gsd, space, lifting, backend=backend)
    return solve_least_squares(system, cg_tol, max_iter, precond), gsd, system


# Error metric ---------------------------------------------------------------------

def h1_relative_error(reconstructed, exact):
    """``sqrt(sum ||rec - ex||_H1^2 / sum ||ex||_H1^2)`` over the paired fields."""
    num = den = 0.0
    for rec, ex in zip(reconstructed, exact):
        l2, h1 = sobolev_sq(rec - ex)
        num += float(l2.sum() + h1.sum())
        l2, h1 = sobolev_sq(ex)
        den += float(l2.sum() + h1.sum())
    if den == 0.0:
        raise ValueError("exact fields vanish identically")
    return float(np.sqrt(num / den))


def h1_error(rec, ex):
    l2, h1 = sobolev_sq(rec - ex)
    return float(np.sqrt(l2.sum() + h1.sum()))


# Integration along curves ---------------------------------------------------------

class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CurveSpec:
    """Polyline from ``vertices[0]`` to ``vertices[-1]``, traversed by arc length."""

    vertices: tuple

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise ValueError("a curve needs at least two 2D vertices")

    @property
    def start(self):
        return np.asarray(self.vertices[0], dtype=float)

    @property
    def end(self):
        return np.asarray(self.vertices[-1], dtype=float)

    def segments(self):
        v = np.asarray(self.vertices, dtype=float)
        return list(zip(v[:-1], v[1:]))

    def length(self):
        return float(sum(np.linalg.norm(b - a) for a, b in self.segments()))


class GradientSystemSampler:
    """Evaluates ``M`` and ``f`` at arbitrary points from projected measurements."""

    def __init__(self, u1, u2, k1=1, k2=None, omega1=0.0, omega2=0.0, rho=1.0, c0=1e-8, policy="abort"):
        from .differentiation import ProjectionPlan, l2_project

        k2 = k1 if k2 is None else k2
        r = u1.space.r
        self.u = (u1, u2)
        self.p1 = tuple(l2_project(u, ProjectionPlan(u.space, k1, r)) for u in (u1, u2))
        self.p2 = tuple(l2_project(u, ProjectionPlan(u.space, k2, r)) for u in (u1, u2))
        self.omega = (omega1, omega2)
        self.rho, self.c0, self.policy = rho, c0, policy
        self.space = u1.space

    def kinematics(self, points):
        points = np.atleast_2d(points)
        eps, H, vals = [], [], []
        for n in range(2):
            _, g = evaluate_field(self.p1[n], points, derivatives=1)  # (2, p, 2): g[k, p, i] = d_i u_k
            eps.append(np.stack([g[0, :, 0], g[1, :, 1], 0.5 * (g[0, :, 1] + g[1, :, 0])], -1))
            _, _, h = evaluate_field(self.p2[n], points, derivatives=2)
            H.append(np.moveaxis(h, 0, 1))
            vals.append(evaluate_field(self.u[n], points).T)
        return PointwiseKinematics(eps[0], eps[1], H[0], H[1], vals[0], vals[1], points)

    def __call__(self, points):
        return build_gradient_system(self.kinematics(points), *self.omega, self.rho, self.c0, self.policy)


def _rk4_segment(sampler, a, b, phi, nsteps):
    tau = b - a
    L = np.linalg.norm(tau)
    tau = tau / L
    hs = L / nsteps

    def rhs(s, y):
        g = sampler(a + s * tau)
        Mg = np.einsum("i,cij->cj", tau, g.M[0].reshape(2, 2, 2))
        fg = g.f[0].reshape(2, 2) @ tau
        return fg - Mg @ y

    s = 0.0
    for _ in range(nsteps):
        k1 = rhs(s, phi)
        k2 = rhs(s + hs / 2, phi + hs / 2 * k1)
        k3 = rhs(s + hs / 2, phi + hs / 2 * k2)
        k4 = rhs(s + hs, phi + hs * k3)
        phi = phi + hs / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s += hs
    return phi


def integrate_ode(sampler, curve, initial_values, step=None, halving_tol=None):
    """Fourth-order Runge-Kutta integration of ``phi' + M_gamma phi = f_gamma`` along ``curve``.

    ``step`` is the arc-length step (default ``h0 / 4`` of the data mesh).
    With ``halving_tol`` set, the endpoint is recomputed with half the step and
    a relative disagreement above the tolerance raises :class:`IntegrationError`.
    """
    m = sampler.space.mesh
    step = step or 1.0 / (4 * max(m.nx, m.ny)) * max(m.domain[1] - m.domain[0], m.domain[3] - m.domain[2])
    for v in curve.vertices:
        m.locate(np.asarray(v, dtype=float)[None])  # raises outside the domain

    def run(h):
        phi = np.asarray(initial_values, dtype=float)
        for a, b in curve.segments():
            n = max(1, int(np.ceil(np.linalg.norm(b - a) / h)))
            phi = _rk4_segment(sampler, a, b, phi, n)
        return phi

    phi = run(step)
    if halving_tol is not None:
        fine = run(step / 2)
        err = np.max(np.abs(fine - phi) / np.maximum(np.abs(fine), 1e-300))
        if err > halving_tol:
            raise IntegrationError(f"step-halving disagreement {err:.2e} exceeds {halving_tol:.1e}")
        phi = fine
    return phi
