import os
import subprocess
import sys

import numpy as np
import pytest

from elastorecon import HAVE_NUMBA, kernels
from elastorecon.fem import reference_gradients
from elastorecon.forward import ModuliSpec, elasticity_operator, synthesize_moduli
from elastorecon.mesh import FeSpace, build_mesh

needs_numba = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not available")


@pytest.fixture
def elasticity_case():
    s = FeSpace(build_mesh(nx=3), 4)
    op = elasticity_operator(synthesize_moduli(ModuliSpec.single_bump(), s), 0.7)
    Gx, Gy = reference_gradients(s)
    _, qw = s.quadrature_points()
    return op, qw, Gx, Gy


@needs_numba
def test_gram_backends_agree(elasticity_case):
    op, qw, Gx, Gy = elasticity_case
    a = kernels.element_gram(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, backend="numpy")
    b = kernels.element_gram(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, backend="numba")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-10)


@needs_numba
def test_load_backends_agree(elasticity_case, rng):
    op, qw, Gx, Gy = elasticity_case
    g = rng.standard_normal(op.wdiag.shape)
    a = kernels.element_load(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, g, backend="numpy")
    b = kernels.element_load(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, g, backend="numba")
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@needs_numba
def test_gradient_system_backends_agree(rng):
    n = 200
    e1, e2 = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    H1, H2 = rng.standard_normal((n, 2, 2, 2)), rng.standard_normal((n, 2, 2, 2))
    s1, s2 = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
    a = kernels.gradient_system(e1, e2, H1, H2, s1, s2, backend="numpy")
    b = kernels.gradient_system(e1, e2, H1, H2, s1, s2, backend="numba")
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-12)


def test_unknown_backend_rejected(elasticity_case):
    op, qw, Gx, Gy = elasticity_case
    with pytest.raises(ValueError):
        kernels.element_gram(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy, backend="fortran")


def test_env_flag_forces_numpy():
    code = "import elastorecon; print(elastorecon.backend(), elastorecon.HAVE_NUMBA)"
    env = dict(os.environ, ELASTORECON_NO_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "False"]


def test_env_flag_results_match(tmp_path):
    code = ("import numpy as np\n"
            "from elastorecon.forward import ModuliSpec, assemble_elasticity, synthesize_moduli\n"
            "from elastorecon.mesh import FeSpace, build_mesh\n"
            "s = FeSpace(build_mesh(nx=3), 4)\n"
            "K = assemble_elasticity(synthesize_moduli(ModuliSpec.single_bump(), s), 0.5)\n"
            f"np.save(r'{tmp_path}/K' + __import__('elastorecon').backend() + '.npy', K.toarray())\n")
    for flag in ("1", "0"):
        env = dict(os.environ, ELASTORECON_NO_NUMBA=flag)
        subprocess.run([sys.executable, "-c", code], env=env, check=True, capture_output=True)
    files = sorted(tmp_path.glob("K*.npy"))
    if len(files) == 2:
        np.testing.assert_allclose(np.load(files[0]), np.load(files[1]), rtol=1e-12, atol=1e-10)
    else:
        assert not HAVE_NUMBA
