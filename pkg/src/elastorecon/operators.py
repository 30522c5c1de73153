"""Pointwise algebra of the inversion: traces, deviators, E, A^-1, B and (M, f).

Symmetric 2x2 tensors are stored as ``(..., 3)`` arrays ``(xx, yy, xy)``;
hessians as ``(..., 2, 2, 2)`` arrays indexed ``[k, i, j]`` for
``d_i d_j u_k``. Everything here is two-dimensional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels

DIM = 2


class InvertibilityError(ValueError):
    """``|det E|`` fell below the margin ``c0`` somewhere."""

    def __init__(self, index, value, c0, location=None, count=1):
        self.index = index
        self.value = value
        self.c0 = c0
        self.location = location
        self.count = count
        where = f" at {tuple(np.round(location, 6))}" if location is not None else f" at point {index}"
        super().__init__(f"|det E| = {abs(value):.3e} < c0 = {c0:.1e}{where} ({count} points below margin)")


def sym_to_matrix(eps):
    eps = np.asarray(eps, dtype=float)
    out = np.empty(eps.shape[:-1] + (2, 2))
    out[..., 0, 0] = eps[..., 0]
    out[..., 1, 1] = eps[..., 1]
    out[..., 0, 1] = out[..., 1, 0] = eps[..., 2]
    return out


def matrix_to_sym(mat):
    mat = np.asarray(mat, dtype=float)
    return np.stack([mat[..., 0, 0], mat[..., 1, 1], 0.5 * (mat[..., 0, 1] + mat[..., 1, 0])], axis=-1)


def trace_deviatoric(eps, d=DIM):
    """Split ``eps`` (full ``(..., d, d)`` matrices) into trace and deviator."""
    eps = np.asarray(eps, dtype=float)
    t = np.trace(eps, axis1=-2, axis2=-1)
    epsD = eps - (t / d)[..., None, None] * np.eye(d)
    return t, epsD


def build_E(eps1, eps2):
    """``E = t1 eps2^D - t2 eps1^D`` and its determinant, for sym-stored strains."""
    t1, D1 = trace_deviatoric(sym_to_matrix(eps1))
    t2, D2 = trace_deviatoric(sym_to_matrix(eps2))
    E = t1[..., None, None] * D2 - t2[..., None, None] * D1
    detE = E[..., 0, 0] * E[..., 1, 1] - E[..., 0, 1] * E[..., 1, 0]
    return E, detE


def assemble_A(eps1, eps2, d=DIM):
    """Stacked ``A = [[t1/d I, eps1^D], [t2/d I, eps2^D]]``, shape (..., 2d, 2d)."""
    t1, D1 = trace_deviatoric(sym_to_matrix(eps1))
    t2, D2 = trace_deviatoric(sym_to_matrix(eps2))
    I = np.eye(d)
    top = np.concatenate([(t1 / d)[..., None, None] * I, D1], axis=-1)
    bot = np.concatenate([(t2 / d)[..., None, None] * I, D2], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def assemble_A_inverse(eps1, eps2, d=DIM):
    """Block inverse of ``A`` built from ``E^-1``; no margin check."""
    t1, D1 = trace_deviatoric(sym_to_matrix(eps1))
    t2, D2 = trace_deviatoric(sym_to_matrix(eps2))
    E = t1[..., None, None] * D2 - t2[..., None, None] * D1
    Einv = np.linalg.inv(E)
    I = np.broadcast_to(np.eye(d), E.shape)
    top = np.concatenate([d * D2 @ Einv, -d * D1 @ Einv], axis=-1)
    bot = np.concatenate([-t2[..., None, None] * Einv, t1[..., None, None] * Einv], axis=-1)
    return np.concatenate([top, bot], axis=-2)


def invert_A(eps1, eps2, c0=1e-8, points=None):
    """``A^-1`` after checking ``|det E| >= c0`` at every point.

    Raises :class:`InvertibilityError` carrying the worst offender.
    """
    _, detE = build_E(eps1, eps2)
    check_margin(detE, c0, points)
    return assemble_A_inverse(eps1, eps2)


def check_margin(detE, c0, points=None):
    a = np.abs(np.ravel(detE))
    bad = ~(a >= c0)
    if bad.any():
        i = int(np.nanargmin(np.where(bad, a, np.inf))) if np.isfinite(a[bad]).any() else int(np.flatnonzero(bad)[0])
        loc = None if points is None else np.reshape(points, (-1, 2))[i]
        raise InvertibilityError(i, float(np.ravel(detE)[i]), c0, loc, int(bad.sum()))


def build_B(H, d=DIM):
    """``B_n = [grad(t_n)/d, div(eps_n^D)]`` from hessian slices, shape (..., d, 2)."""
    H = np.asarray(H, dtype=float)
    grad_t = np.einsum("...jij->...i", H)
    lap = np.einsum("...ijj->...i", H)
    div_dev = (d - 2) / (2 * d) * grad_t + 0.5 * lap
    return np.stack([grad_t / d, div_dev], axis=-1)


@dataclass
class InvertibilityReport:
    min_abs_detE: float
    location: np.ndarray
    fraction_below: float
    c0: float

    @classmethod
    def from_field(cls, detE, points, c0):
        a = np.abs(np.ravel(detE))
        i = int(np.argmin(a))
        return cls(float(a[i]), np.reshape(points, (-1, 2))[i].copy(), float(np.mean(a < c0)), c0)


@dataclass
class GradientSystemData:
    """Coefficients of ``L(alpha, beta) = grad(alpha, beta) + M (alpha, beta) = f``.

    ``M`` has shape ``(..., 4, 2)`` with ``a = M[..., 0:2, 0]``,
    ``b = M[..., 0:2, 1]``, ``c = M[..., 2:4, 0]``, ``d = M[..., 2:4, 1]``.
    Arrays carry the leading shape of the points they were evaluated on.
    """

    M: np.ndarray
    f: np.ndarray
    detE: np.ndarray
    report: InvertibilityReport | None = None

    @property
    def a(self):
        return self.M[..., 0:2, 0]

    @property
    def b(self):
        return self.M[..., 0:2, 1]

    @property
    def c(self):
        return self.M[..., 2:4, 0]

    @property
    def d(self):
        return self.M[..., 2:4, 1]

    @property
    def f1(self):
        return self.f[..., 0:2]

    @property
    def f2(self):
        return self.f[..., 2:4]

    def sup_norms(self):
        return {k: float(np.max(np.linalg.norm(getattr(self, k), axis=-1))) for k in "abcd"}

    def apply(self, alpha, beta, grad_alpha, grad_beta):
        """Pointwise ``L(alpha, beta)``; values (...,) and gradients (..., 2)."""
        ab = np.stack([alpha, beta], axis=-1)
        return np.concatenate([grad_alpha, grad_beta], axis=-1) + np.einsum("...ij,...j->...i", self.M, ab)


@dataclass
class PointwiseKinematics:
    """Measured quantities at a set of points, for both measurements."""

    eps1: np.ndarray
    eps2: np.ndarray
    H1: np.ndarray
    H2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    points: np.ndarray | None = None


def build_gradient_system(kin, omega1=0.0, omega2=0.0, rho=1.0, c0=1e-8, policy="abort", backend=None):
    """``M = A^-1 B`` and ``f = -A^-1 (rho w1^2 u1, rho w2^2 u2)`` at every point.

    ``policy="mask"`` zeroes ``M`` and ``f`` where ``|det E| < c0`` instead of
    raising.
    """
    if policy not in ("abort", "mask"):
        raise ValueError(f"unknown policy {policy!r}")
    shape = np.shape(kin.eps1)[:-1]
    flat = lambda a, tail: np.reshape(a, (-1,) + tail)
    eps1, eps2 = flat(kin.eps1, (3,)), flat(kin.eps2, (3,))
    s1 = rho * omega1**2 * flat(kin.u1, (2,))
    s2 = rho * omega2**2 * flat(kin.u2, (2,))
    _, detE = build_E(eps1, eps2)
    bad = ~(np.abs(detE) >= c0)
    if bad.any() and policy == "abort":
        check_margin(detE, c0, kin.points)
    M, f, detE = kernels.gradient_system(eps1, eps2, flat(kin.H1, (2, 2, 2)), flat(kin.H2, (2, 2, 2)), s1, s2,
                                         backend=backend)
    if bad.any():
        M[bad] = 0.0
        f[bad] = 0.0
    report = None
    if kin.points is not None:
        report = InvertibilityReport.from_field(detE, kin.points, c0)
    return GradientSystemData(M.reshape(shape + (4, 2)), f.reshape(shape + (4,)), detE.reshape(shape), report)
