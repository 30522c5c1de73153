import numpy as np
import pytest
import scipy.sparse as sp

from elastorecon.experiments import ode_check, run_scenario
from elastorecon.fem import Field, assemble_bilinear, constant_field, evaluate_field, interpolate, stiffness_kernel
from elastorecon.forward import prototype_fields
from elastorecon.mesh import FeSpace, build_mesh
from elastorecon.operators import GradientSystemData
from elastorecon.reconstruction import (CurveSpec, GradientSystemSampler, IntegrationError, LiftingPair,
                                        NormalSystem, assemble_normal_system, build_lifting, h1_error,
                                        h1_relative_error, integrate_ode, min_ritz_value, reconstruct,
                                        solve_least_squares)
from elastorecon.solvers import cg

import frozen_values
from oracles import quadratic_form


def _zero_system(space):
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    return GradientSystemData(np.zeros((ne, nq, 4, 2)), np.zeros((ne, nq, 4)), -np.ones((ne, nq)))


def _random_system(space, rng):
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    return GradientSystemData(rng.standard_normal((ne, nq, 4, 2)), rng.standard_normal((ne, nq, 4)),
                              -np.ones((ne, nq)))


def _prototype_data(space):
    p = prototype_fields(2)
    u1 = interpolate(lambda x, y: p.u1(np.stack([x, y], -1)).T, space)
    u2 = interpolate(lambda x, y: p.u2(np.stack([x, y], -1)).T, space)
    return u1, u2


# Lifting ----------------------------------------------------------------------------

def test_constant_lifting():
    s = FeSpace(build_mesh(nx=3), 4)
    lift = build_lifting(lambda x, y: 22.0, lambda x, y: 2.0 + 0 * x, s)
    bnd, inner = s.boundary_dofs(), s.interior_dofs()
    assert np.all(lift.alpha.values[0, bnd] == 22.0) and np.all(lift.beta.values[0, bnd] == 2.0)
    assert np.all(lift.alpha.values[0, inner] == 0.0) and np.all(lift.beta.values[0, inner] == 0.0)


def test_lifting_trace_exact_from_field(static20):
    _, data = static20
    lift = build_lifting(data.material.alpha, data.material.beta, data.space)
    bnd = data.space.boundary_dofs()
    np.testing.assert_array_equal(lift.alpha.values[0, bnd], data.material.alpha.values[0, bnd])
    assert lift.vector.shape == (2 * data.space.dof_count,)


def test_lifting_shift_invariance(static20):
    _, data = static20
    nodal = build_lifting(data.material.alpha, data.material.beta, data.space)
    smooth = LiftingPair(data.material.alpha, data.material.beta)  # same trace, nonzero interior
    a, _, _ = reconstruct(data.u1, data.u2, nodal, precond="lu")
    b, _, _ = reconstruct(data.u1, data.u2, smooth, precond="lu")
    np.testing.assert_allclose(a.alpha.values, b.alpha.values, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(a.beta.values, b.beta.values, rtol=1e-8, atol=1e-8)


# Normal system ----------------------------------------------------------------------

def test_zero_M_gives_block_laplacian():
    s = FeSpace(build_mesh(nx=3), 4)
    system = assemble_normal_system(_zero_system(s), s, build_lifting(lambda x, y: 1.0, lambda x, y: 1.0, s))
    L = assemble_bilinear(s, stiffness_kernel())
    expect = sp.block_diag([L, L]).tocsr()
    assert abs(system.K_full - expect).max() <= 1e-12


def test_zero_data_constant_trace_gives_constant():
    s = FeSpace(build_mesh(nx=3), 4)
    system = assemble_normal_system(_zero_system(s), s, build_lifting(lambda x, y: 5.0, lambda x, y: -1.5, s))
    res = solve_least_squares(system, cg_tol=1e-12)
    np.testing.assert_allclose(res.alpha.values, 5.0, atol=1e-10)
    np.testing.assert_allclose(res.beta.values, -1.5, atol=1e-10)
    inner = s.interior_dofs()
    x = np.concatenate([res.alpha.values[0, inner] - 0.0, res.beta.values[0, inner]])
    assert np.allclose(x[:len(inner)], 5.0)  # expand() added the zero-interior lifting to alpha-zero


def test_quadratic_form_against_brute_force(rng):
    s = FeSpace(build_mesh(nx=2), 3)
    gsd = _random_system(s, rng)
    lift = build_lifting(lambda x, y: 0 * x, lambda x, y: 0 * x, s)
    system = assemble_normal_system(gsd, s, lift)
    ca, cb = rng.standard_normal(4), rng.standard_normal(4)
    fa = lambda x, y: ca[0] + ca[1] * x * y**2 + ca[2] * x**3 + ca[3] * y
    fb = lambda x, y: cb[0] * x**2 + cb[1] * y**3 + cb[2] * x * y + cb[3]
    ga = lambda x, y: (ca[1] * y**2 + 3 * ca[2] * x**2, 2 * ca[1] * x * y + ca[3])
    gb = lambda x, y: (2 * cb[0] * x + cb[2] * y, 3 * cb[1] * y**2 + cb[2] * x)
    x = np.concatenate([interpolate(fa, s).values[0], interpolate(fb, s).values[0]])
    pts, w = s.quadrature_points()
    X, Y = pts[..., 0], pts[..., 1]
    oracle = quadratic_form(gsd.M, gsd.f, fa(X, Y), fb(X, Y), np.stack(ga(X, Y), -1), np.stack(gb(X, Y), -1), w)
    fsq = np.sum(w[..., None] * gsd.f**2)
    value = x @ (system.K_full @ x) - 2 * x @ system.load + fsq
    assert value == pytest.approx(oracle, rel=1e-10)


def test_normal_matrix_symmetric_positive(rng, static20):
    s = FeSpace(build_mesh(nx=3), 4)
    system = assemble_normal_system(_random_system(s, rng), s, build_lifting(lambda x, y: 1.0, lambda x, y: 1.0, s))
    K = system.K
    assert abs(K - K.T).max() <= 1e-12 * abs(K).max()
    for _ in range(50):
        v = rng.standard_normal(K.shape[0])
        assert v @ (K @ v) > 0
    assert min_ritz_value(system) > 0


def test_galerkin_orthogonality(static20):
    _, data = static20
    lift = build_lifting(data.material.alpha, data.material.beta, data.space)
    res, _, system = reconstruct(data.u1, data.u2, lift, precond="lu", cg_tol=1e-10)
    x = np.concatenate([res.alpha.values[0], res.beta.values[0]])[system.free] - system.lifting.vector[system.free]
    r = system.K @ x - system.rhs
    assert np.linalg.norm(r) <= 1e-10 * np.linalg.norm(system.rhs) * 10


def test_identity_system_returns_rhs(rng):
    s = FeSpace(build_mesh(nx=2), 2)
    lift = build_lifting(lambda x, y: 0 * x, lambda x, y: 0 * x, s)
    inner = s.interior_dofs()
    free = np.concatenate([inner, inner + s.dof_count])
    rhs = rng.standard_normal(len(free))
    system = NormalSystem(sp.identity(len(free), format="csr"), rhs, free, s, lift, None, None)
    res = solve_least_squares(system)
    np.testing.assert_allclose(np.concatenate([res.alpha.values[0], res.beta.values[0]])[free], rhs)
    assert res.iterations == 1


def test_missing_quadrature_data_rejected():
    s = FeSpace(build_mesh(nx=2), 3)
    bad = GradientSystemData(np.zeros((3, 4, 2)), np.zeros((3, 4)), np.zeros(3))
    with pytest.raises(ValueError):
        assemble_normal_system(bad, s, build_lifting(lambda x, y: 1.0, lambda x, y: 1.0, s))


def test_prototype_returns_constants():
    s = FeSpace(build_mesh(nx=4), 5)
    u1, u2 = _prototype_data(s)
    lift = build_lifting(lambda x, y: 22.0, lambda x, y: 2.0, s)
    res, gsd, system = reconstruct(u1, u2, lift, cg_tol=1e-12)
    # discrete hessians of the interpolated linear fields are pure round-off, amplified by 1/h^2
    assert np.abs(gsd.M).max() <= 1e-10 and np.abs(gsd.f).max() == 0.0
    np.testing.assert_allclose(res.alpha.values, 22.0, atol=1e-9)
    np.testing.assert_allclose(res.beta.values, 2.0, atol=1e-9)


@pytest.mark.parametrize("precond", ["none", "jacobi", "lu", "amg"])
def test_preconditioners_agree(static20, precond):
    _, data = static20
    lift = build_lifting(data.material.alpha, data.material.beta, data.space)
    ref, _, _ = reconstruct(data.u1, data.u2, lift, k1=2, precond="lu", cg_tol=1e-11)
    res, _, _ = reconstruct(data.u1, data.u2, lift, k1=2, precond=precond, cg_tol=1e-11)
    scale = np.abs(ref.alpha.values).max()
    assert np.abs(res.alpha.values - ref.alpha.values).max() <= 1e-7 * scale
    assert np.abs(res.beta.values - ref.beta.values).max() <= 1e-7 * scale


# Error metric -----------------------------------------------------------------------

def test_h1_metric_examples():
    s = FeSpace(build_mesh(nx=3), 4)
    a = interpolate(lambda x, y: 22 + np.sin(3 * x) * y, s)
    b = interpolate(lambda x, y: 2 + x * y, s)
    assert h1_relative_error((a, b), (a, b)) == 0.0
    assert h1_relative_error((a * 1.1, b * 1.1), (a, b)) == pytest.approx(0.1, rel=1e-12)
    assert h1_error(a, a) == 0.0
    zero = constant_field(s, 0.0)
    with pytest.raises(ValueError):
        h1_relative_error((a, b), (zero, zero))


def test_interpolation_floor(frozen):
    # The moduli use a C1 cutoff; the floor is set by the jump in its second
    # derivative and falls like h^1.5, not to round-off.
    f20, f40 = frozen_values.interpolation_floor(20), frozen_values.interpolation_floor(40)
    assert f40 == pytest.approx(frozen["interpolation_floor"]["40"], rel=1e-6)
    assert f20 == pytest.approx(frozen["interpolation_floor"]["20"], rel=1e-6)
    assert abs(np.log2(f20 / f40) - 1.5) < 0.2


def test_smooth_interpolation_floor():
    from elastorecon.forward import ModuliSpec

    class Smooth(ModuliSpec):
        def alpha(self, x, y):
            return 22 + 18 * np.exp(-20 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))

        def beta(self, x, y):
            return 2 + 18 * np.exp(-20 * ((x - 0.5) ** 2 + (y - 0.5) ** 2))

    assert frozen_values.interpolation_floor(40, Smooth()) <= 1e-6


# Refinement and regression ------------------------------------------------------------

def test_monotone_refinement(static20, static40, frozen):
    e20 = run_scenario(static20[0]).rows[0].err_rel_H1
    e40 = run_scenario(static40[0], static40[1]).rows[0].err_rel_H1
    assert e40 <= e20
    assert e20 == pytest.approx(frozen["static_error_k1"]["20"], rel=1e-6)
    assert e40 == pytest.approx(frozen["static_error_k1"]["40"], rel=1e-6)


# Integration along curves -----------------------------------------------------------

def test_curve_validation():
    with pytest.raises(ValueError):
        CurveSpec(((0.0, 0.0),))
    c = CurveSpec(((0, 0), (3, 4), (3, 0)))
    assert c.length() == pytest.approx(9.0)
    assert len(c.segments()) == 2


def test_ode_constant_on_prototype():
    s = FeSpace(build_mesh(nx=4), 5)
    sampler = GradientSystemSampler(*_prototype_data(s))
    phi = integrate_ode(sampler, CurveSpec(((0.0, 0.3), (0.6, 0.9), (1.0, 0.2))), [22.0, 2.0])
    np.testing.assert_allclose(phi, [22.0, 2.0], atol=1e-12)


def test_ode_rejects_curve_outside_domain():
    s = FeSpace(build_mesh(nx=2), 3)
    sampler = GradientSystemSampler(*_prototype_data(s))
    with pytest.raises(ValueError):
        integrate_ode(sampler, CurveSpec(((0.5, 0.5), (1.5, 0.5))), [1.0, 1.0])


def test_ode_step_halving_check(static20):
    _, data = static20
    sampler = GradientSystemSampler(data.u1, data.u2)
    curve = CurveSpec(((0.0, 0.5), (0.5, 0.5)))
    with pytest.raises(IntegrationError):
        integrate_ode(sampler, curve, [22.0, 2.0], step=0.25, halving_tol=1e-8)
    # broken projections jump across element edges, so RK4 halving only agrees to a few percent
    phi = integrate_ode(sampler, curve, [22.0, 2.0], halving_tol=0.1)
    assert np.all(np.isfinite(phi))


def test_ode_endpoint_within_five_percent(static40):
    cfg, data = static40
    check = ode_check(cfg, data=data)[0]
    assert max(check.rel_errors) <= 0.05


def test_ode_matches_variational_at_probes(static40):
    cfg, data = static40
    lift = build_lifting(data.material.alpha, data.material.beta, data.space)
    res, _, _ = reconstruct(data.u1, data.u2, lift, precond="lu")
    sampler = GradientSystemSampler(data.u1, data.u2)
    probes = np.array([[0.3, 0.3], [0.5, 0.5], [0.7, 0.4], [0.45, 0.6], [0.2, 0.8]])
    for x, y in probes:
        start = (0.0, y)
        init = [data.spec.alpha(*start), data.spec.beta(*start)]
        ode = integrate_ode(sampler, CurveSpec((start, (x, y))), init)
        var = np.array([evaluate_field(res.alpha, [[x, y]])[0, 0], evaluate_field(res.beta, [[x, y]])[0, 0]])
        exact = np.array([data.spec.alpha(x, y), data.spec.beta(x, y)])
        bound = 2 * max(np.abs(var - exact).max(), np.abs(ode - exact).max())
        assert np.abs(var - ode).max() <= bound
        assert np.abs(var - exact).max() <= 0.05 * np.abs(exact).max()
