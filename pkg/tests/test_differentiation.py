import warnings

import numpy as np
import pytest

from elastorecon.differentiation import (ProjectionPlan, admissible_factors, choose_mesh_sizes,
                                         hessian_from_projection, l2_project, project_function, sample_on_fine,
                                         snap_factor, strain_from_projection)
from elastorecon.fem import Field, interpolate
from elastorecon.mesh import BROKEN, FeSpace, build_mesh, gauss_rule
from elastorecon.forward import prototype_fields

import frozen_values
from oracles import dense_broken_projection_1d


def _l2_broken(f):
    """L2 norm of a broken Legendre field (orthogonal basis)."""
    s = f.space
    r = s.r
    n = (2 / (2 * np.arange(r + 1) + 1))
    norms = np.outer(n, n).ravel() * s.mesh.hx * s.mesh.hy / 4
    c = f.values.reshape(f.ncomp, -1, (r + 1) ** 2)
    return float(np.sqrt((c**2 * norms).sum()))


@pytest.fixture
def smooth_field():
    s = FeSpace(build_mesh(nx=6), 5)
    return interpolate(lambda x, y: np.stack([np.sin(3 * x) * np.exp(y), np.cos(2 * x * y)]), s)


def test_idempotence(smooth_field):
    plan = ProjectionPlan(smooth_field.space, 3, 5)
    once = l2_project(smooth_field, plan)
    # project the broken result again by evaluating it as a function
    from elastorecon.fem import evaluate_field

    def as_func(x, y):
        pts = np.column_stack([x.ravel(), y.ravel()])
        return evaluate_field(once, pts).reshape((2,) + x.shape)

    twice = project_function(as_func, plan.target.mesh, 5, nquad=12)
    np.testing.assert_allclose(twice.values, once.values, atol=1e-11)


def test_linearity(smooth_field, rng):
    plan = ProjectionPlan(smooth_field.space, 2, 4)
    other = Field(smooth_field.space, rng.standard_normal(smooth_field.values.shape))
    lhs = l2_project(smooth_field * 2.0 + other * -3.0, plan).values
    rhs = 2.0 * l2_project(smooth_field, plan).values - 3.0 * l2_project(other, plan).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-11)


def test_l2_stability(smooth_field):
    from elastorecon.fem import sobolev_sq
    plan = ProjectionPlan(smooth_field.space, 3, 2)
    p = l2_project(smooth_field, plan)
    l2, _ = sobolev_sq(smooth_field, nquad=10)
    assert _l2_broken(p) <= np.sqrt(l2.sum()) + 1e-12


def test_polynomial_reproduced():
    s = FeSpace(build_mesh(nx=4), 5)
    poly = lambda x, y: np.stack([x**3 * y**2 - 2 * x * y + 1, y**5 - x**4])
    u = interpolate(poly, s)
    proj = l2_project(u, ProjectionPlan(s, 2, 5))
    exact = project_function(poly, s.mesh.coarsen(2), 5)
    np.testing.assert_allclose(proj.values, exact.values, atol=1e-11)


def test_sine_matches_dense_oracle():
    s = FeSpace(build_mesh(nx=12), 5)
    u = interpolate(lambda x, y: np.sin(2 * np.pi * x), s)
    proj = l2_project(u, ProjectionPlan(s, 6, 5))
    oracle_u = interpolate(lambda x, y: np.sin(2 * np.pi * x), s)
    # the oracle projects the same nodal interpolant, restricted to a horizontal line
    from elastorecon.fem import evaluate_field
    line = lambda x: evaluate_field(oracle_u, np.column_stack([x, np.full_like(x, 0.37)]))[0]
    ref = dense_broken_projection_1d(line, 2, 5, nquad=12, nsub=6)
    x = np.linspace(0.01, 0.99, 41)
    got = evaluate_field(proj, np.column_stack([x, np.full_like(x, 0.37)]))[0]
    np.testing.assert_allclose(got, ref(x), atol=1e-10)


def test_plan_validation():
    s = FeSpace(build_mesh(nx=6), 3)
    with pytest.raises(ValueError):
        ProjectionPlan(s, 4, 3)
    with pytest.raises(ValueError):
        ProjectionPlan(s, 2, -1)
    other = interpolate(lambda x, y: x, FeSpace(build_mesh(nx=3), 3))
    with pytest.raises(ValueError):
        l2_project(other, ProjectionPlan(s, 2, 3))
    assert ProjectionPlan(s, 3, 3).quadrature.degree >= 7


@pytest.mark.parametrize("k", [1, 2])
def test_prototype_strains(k):
    s = FeSpace(build_mesh(nx=4), 5)
    p = prototype_fields(2)
    u1 = interpolate(lambda x, y: p.u1(np.stack([x, y], -1)).T, s)
    u2 = interpolate(lambda x, y: p.u2(np.stack([x, y], -1)).T, s)
    np.testing.assert_allclose(strain_from_projection(u2, k).values, np.broadcast_to([1, 1, 0], (16, 36, 3)),
                               atol=1e-12)
    np.testing.assert_allclose(strain_from_projection(u1, k).values, np.broadcast_to([0, 0, 1], (16, 36, 3)),
                               atol=1e-12)
    np.testing.assert_allclose(hessian_from_projection(u1, k).values, 0, atol=1e-10)


def test_quadratic_hessian():
    s = FeSpace(build_mesh(nx=4), 3)
    u = interpolate(lambda x, y: np.stack([x**2, 0 * x]), s)
    H = hessian_from_projection(u, 2, 2).values
    expect = np.zeros((2, 2, 2))
    expect[0, 0, 0] = 2
    np.testing.assert_allclose(H, np.broadcast_to(expect, H.shape), atol=1e-10)


def test_low_order_rejected():
    s = FeSpace(build_mesh(nx=2), 3)
    u = interpolate(lambda x, y: np.stack([x, y]), s)
    with pytest.raises(ValueError):
        hessian_from_projection(u, 1, 1)
    with pytest.raises(ValueError):
        strain_from_projection(u, 1, 0)


def test_polynomial_derivatives_exact():
    s = FeSpace(build_mesh(nx=4), 5)
    u = interpolate(lambda x, y: np.stack([x**3 * y**2, x * y**4]), s)
    pts, _ = s.quadrature_points()
    X, Y = pts[..., 0], pts[..., 1]
    eps = strain_from_projection(u, 2).values
    np.testing.assert_allclose(eps[..., 0], 3 * X**2 * Y**2, atol=1e-10)
    np.testing.assert_allclose(eps[..., 1], 4 * X * Y**3, atol=1e-10)
    np.testing.assert_allclose(eps[..., 2], 0.5 * (2 * X**3 * Y + Y**4), atol=1e-10)
    H = hessian_from_projection(u, 4).values
    np.testing.assert_allclose(H[..., 0, 0, 0], 6 * X * Y**2, atol=1e-9)
    np.testing.assert_allclose(H[..., 1, 1, 1], 12 * X * Y**2, atol=1e-9)
    np.testing.assert_allclose(H[..., 0, 0, 1], 6 * X**2 * Y, atol=1e-9)


def test_sine_hessian_rate():
    s = FeSpace(build_mesh(nx=16), 5)
    u = interpolate(lambda x, y: np.stack([np.sin(2 * np.pi * x), 0 * x]), s)
    pts, w = s.quadrature_points()
    exact = -(2 * np.pi) ** 2 * np.sin(2 * np.pi * pts[..., 0])
    ks = [1, 2, 4]
    errs = []
    for k in ks:
        H = hessian_from_projection(u, k).values
        d = H.copy()
        d[..., 0, 0, 0] -= exact
        errs.append(np.sqrt(np.einsum("eq,eqcij->", w, d**2)))
    slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
    assert abs(slope - 4) <= 0.3


def test_sample_on_fine_requires_nesting():
    coarse = project_function(lambda x, y: x, build_mesh(nx=3), 2)
    with pytest.raises(ValueError):
        sample_on_fine(coarse, FeSpace(build_mesh(nx=4), 2))


def test_noisy_constant_strain_bound(frozen):
    ratios = frozen_values.constant_strain_ratios()
    C = max(frozen["constant_strain_ratio"].values())
    for key, v in ratios.items():
        assert v <= C * (1 + 1e-9), key
        assert v == pytest.approx(frozen["constant_strain_ratio"][key], rel=1e-6)


def test_hessian_noise_amplification_bound(frozen):
    ratios = frozen_values.hessian_noise_ratios()
    C = max(frozen["hessian_noise_ratio"].values())
    for key, v in ratios.items():
        assert v <= C * (1 + 1e-9), key
        assert v == pytest.approx(frozen["hessian_noise_ratio"][key], rel=1e-6)


# Mesh-size rule ---------------------------------------------------------------------

def test_ideal_sizes():
    ch = choose_mesh_sizes(1e-6)
    assert ch.h1_ideal == pytest.approx(1e-3)
    assert ch.h2_ideal == pytest.approx(1e-2)


def test_scale_multiplies_both():
    a, b = choose_mesh_sizes(1e-6), choose_mesh_sizes(1e-6, scale=10)
    assert b.h1_ideal == pytest.approx(10 * a.h1_ideal)
    assert b.h2_ideal == pytest.approx(10 * a.h2_ideal)


def test_clamped_to_data_grid():
    with pytest.warns(UserWarning, match="below the data grid"):
        ch = choose_mesh_sizes(1e-7, h0=1 / 120, nx=120)
    assert ch.k2 == 1 and ch.k1 == 1
    assert ch.h2_ideal == pytest.approx(10 ** (-7 / 3))


def test_clamped_to_domain():
    with pytest.warns(UserWarning, match="exceeds the domain"):
        ch = choose_mesh_sizes(0.5, h0=1 / 40, nx=40, scale=10)
    assert ch.k2 == 40


def test_sizes_monotone_in_delta():
    deltas = np.logspace(-12, -2, 21)
    h1 = [choose_mesh_sizes(d).h1_ideal for d in deltas]
    h2 = [choose_mesh_sizes(d).h2_ideal for d in deltas]
    assert np.all(np.diff(h1) > 0) and np.all(np.diff(h2) > 0)


def test_snapping_uses_divisors():
    assert admissible_factors(40) == [1, 2, 4, 5, 8, 10, 20, 40]
    k, w = snap_factor(0.17, 1 / 40, 40)
    assert k == 8 and w is None  # ideal 6.8 sits nearer 8 than 5 in log scale


def test_mesh_size_validation():
    for kw in ({"delta": 0.0}, {"delta": 1e-3, "ell": 2}, {"delta": 1e-3, "scale": 0}):
        with pytest.raises(ValueError):
            choose_mesh_sizes(**kw)
