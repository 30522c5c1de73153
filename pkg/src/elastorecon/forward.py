"""Synthetic measurements: moduli distributions, prototype fields and the forward elasticity solve."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .fem import ElementOperator, Field, interpolate, scatter, element_matrices, values_at_quadrature
from .mesh import CONFORMING
from .solvers import cg

log = logging.getLogger(__name__)


def cutoff(rad, r_minus, r_plus):
    """C^1 radial cutoff: 1 inside ``r_minus``, 0 outside ``r_plus``, cubic blend between."""
    if not r_minus < r_plus:
        raise ValueError(f"cutoff needs r_minus < r_plus, got {r_minus} >= {r_plus}")
    rad = np.asarray(rad, dtype=float)
    s = np.clip((rad - r_minus) / (r_plus - r_minus), 0.0, 1.0)
    return (1.0 - s) ** 2 * (1.0 + 2.0 * s)


@dataclass(frozen=True)
class Bump:
    amplitude: float
    center: tuple
    r_minus: float
    r_plus: float

    def __post_init__(self):
        if not self.r_minus < self.r_plus:
            raise ValueError(f"bump radii must satisfy r_minus < r_plus, got {self.r_minus}, {self.r_plus}")


def _bump_sum(base, bumps, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.full(np.broadcast(x, y).shape, float(base))
    for b in bumps:
        rad = np.hypot(x - b.center[0], y - b.center[1])
        near = rad < b.r_plus
        if near.any():
            out[near] += b.amplitude * cutoff(rad[near], b.r_minus, b.r_plus)
    return out


@dataclass(frozen=True)
class ModuliSpec:
    """``alpha = alpha0 + sum_i alpha_i c(|x - x_i|; r_i^-, r_i^+)`` and likewise for beta."""

    alpha0: float = 22.0
    beta0: float = 2.0
    alpha_bumps: tuple = ()
    beta_bumps: tuple = ()

    def alpha(self, x, y):
        return _bump_sum(self.alpha0, self.alpha_bumps, x, y)

    def beta(self, x, y):
        return _bump_sum(self.beta0, self.beta_bumps, x, y)

    @classmethod
    def single_bump(cls, alpha0=22.0, beta0=2.0, amp=18.0, center=(0.5, 0.5), r_minus=0.1, r_plus=0.2):
        b = (Bump(amp, tuple(center), r_minus, r_plus),)
        return cls(alpha0, beta0, b, b)

    @classmethod
    def random(cls, n=1000, seed=12345, alpha0=22.0, beta0=2.0, alpha_amp=(0.0, 4.0), beta_amp=(0.0, 0.4),
               r_minus=(0.01, 0.03), width=(0.02, 0.05)):
        """Random bumps: uniform centers in the unit square, uniform amplitudes,
        inner radii and blend widths drawn from the given ranges."""
        rng = np.random.default_rng(seed)

        def draw(amp):
            c = rng.uniform(0.0, 1.0, size=(n, 2))
            a = rng.uniform(*amp, size=n)
            rm = rng.uniform(*r_minus, size=n)
            rp = rm + rng.uniform(*width, size=n)
            return tuple(Bump(float(a[i]), (float(c[i, 0]), float(c[i, 1])), float(rm[i]), float(rp[i]))
                         for i in range(n))

        return cls(alpha0, beta0, draw(alpha_amp), draw(beta_amp))


@dataclass
class MaterialField:
    alpha: Field
    beta: Field
    rho: float = 1.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("mass density must be positive")
        if np.any(self.alpha.values <= 0) or np.any(self.beta.values <= 0):
            raise ValueError("moduli must be positive everywhere")


def synthesize_moduli(spec, space, rho=1.0):
    if space.continuity != CONFORMING:
        raise ValueError("moduli live on a conforming space")
    return MaterialField(interpolate(spec.alpha, space), interpolate(spec.beta, space), rho)


@dataclass(frozen=True)
class Prototype:
    """Closed-form constant-coefficient pair with ``t1 = 0`` and ``eps2 = I``."""

    d: int

    def u1(self, x):
        x = np.asarray(x, dtype=float)
        return x.sum(axis=-1, keepdims=True) - x

    def u2(self, x):
        return np.asarray(x, dtype=float).copy()

    @property
    def eps1(self):
        return np.ones((self.d, self.d)) - np.eye(self.d)

    @property
    def eps2(self):
        return np.eye(self.d)

    @property
    def t1(self):
        return 0.0

    @property
    def t2(self):
        return float(self.d)


def prototype_fields(d=2):
    if d not in (2, 3):
        raise ValueError("dimension must be 2 or 3")
    return Prototype(d)


@dataclass(frozen=True)
class DirichletBC:
    """Closed-form boundary data ``g(x, y) -> (gx, gy)`` for one measurement."""

    g: callable
    name: str = ""

    def __call__(self, x, y):
        return np.asarray(self.g(x, y), dtype=float)


def static_bcs():
    """Boundary data of the static experiment."""
    return (DirichletBC(lambda x, y: (1.0 + y, 1.0 + x), "static-1"),
            DirichletBC(lambda x, y: (1.0 + x, 1.0 + y), "static-2"))


def frequency_bcs():
    """Boundary data of the frequency-dependent experiment."""
    return (DirichletBC(lambda x, y: (1.0 + x, 1.0 + y), "frequency-1"),
            DirichletBC(lambda x, y: (1.0 + x + y, -(1.0 + x + y)), "frequency-2"))


def prototype_bcs():
    p = prototype_fields(2)
    return (DirichletBC(lambda x, y: p.u1(np.stack([x, y], -1)).T, "prototype-1"),
            DirichletBC(lambda x, y: p.u2(np.stack([x, y], -1)).T, "prototype-2"))


def elasticity_operator(material, omega):
    """Rows (trace, two deviatoric components, two displacement values) with weights
    ``(alpha/d, 2 beta, 2 beta, -rho w^2, -rho w^2)``."""
    space = material.alpha.space
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    op = ElementOperator.zeros(ne, nq, 5, 2)
    op.Adx[..., 0, 0] = 1.0
    op.Ady[..., 0, 1] = 1.0
    op.Adx[..., 1, 0] = 0.5
    op.Ady[..., 1, 1] = -0.5
    op.Ady[..., 2, 0] = 0.5
    op.Adx[..., 2, 1] = 0.5
    op.Aval[..., 3, 0] = 1.0
    op.Aval[..., 4, 1] = 1.0
    a = values_at_quadrature(material.alpha)[0]
    b = values_at_quadrature(material.beta)[0]
    op.wdiag[..., 0] = a / 2.0
    op.wdiag[..., 1] = 2.0 * b
    op.wdiag[..., 2] = 2.0 * b
    op.wdiag[..., 3:] = -material.rho * omega**2
    return op


def assemble_elasticity(material, omega=0.0, backend=None):
    space = material.alpha.space
    op = elasticity_operator(material, omega)
    return scatter(space, element_matrices(space, op, backend=backend), 2)


@dataclass
class ForwardResult:
    u: Field
    iterations: int
    residual: float


def solve_forward(material, omega, bc, space=None, cg_tol=1e-10, precond="lu", maxiter=None, backend=None,
                  return_info=False):
    """Galerkin solution of the time-harmonic Dirichlet problem.

    The assembled operator is restricted to interior dofs after moving the
    boundary values to the right-hand side.
    """
    space = space or material.alpha.space
    if space != material.alpha.space:
        raise ValueError("material and solution must share a space")
    K = assemble_elasticity(material, omega, backend=backend)
    ndof = space.dof_count
    xy = space.node_coords()
    bnd = space.boundary_dofs()
    g = bc(xy[bnd, 0], xy[bnd, 1])
    u = np.zeros(2 * ndof)
    fixed = np.concatenate([bnd, bnd + ndof])
    u[fixed] = np.concatenate([g[0], g[1]])
    free = np.setdiff1d(np.arange(2 * ndof), fixed)
    Kff = K[free][:, free]
    rhs = -(K[free][:, fixed] @ u[fixed])
    res = cg(Kff, rhs, tol=cg_tol, maxiter=maxiter, precond=precond)
    log.info("forward solve (omega=%g): %d CG iterations", omega, res.iterations)
    u[free] = res.x
    out = Field(space, u.reshape(2, ndof))
    if return_info:
        return ForwardResult(out, res.iterations, res.residual)
    return out
