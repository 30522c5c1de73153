"""Time the numba and numpy implementations of the hot kernels side by side.

    python benchmarks/bench_kernels.py --nx 40 --repeat 3

The numba column excludes compilation (one warm-up call first). Results are
checked for agreement before timing.
"""
import argparse
import time

import numpy as np

from elastorecon import HAVE_NUMBA, kernels
from elastorecon.forward import ModuliSpec, elasticity_operator, synthesize_moduli
from elastorecon.fem import reference_gradients
from elastorecon.mesh import FeSpace, build_mesh
from elastorecon.operators import PointwiseKinematics
from elastorecon.reconstruction import least_squares_operator


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(nx, seed=0):
    space = FeSpace(build_mesh(nx=nx), 5)
    Gx, Gy = reference_gradients(space)
    _, qw = space.quadrature_points()
    mat = synthesize_moduli(ModuliSpec.single_bump(), space)
    op = elasticity_operator(mat, 0.5)
    yield "elasticity gram", lambda b: kernels.element_gram(op.Aval, op.Adx, op.Ady, op.wdiag, qw, Gx, Gy,
                                                            backend=b)

    rng = np.random.default_rng(seed)
    ne, nq = space.mesh.n_elements, (space.r + 1) ** 2
    n = ne * nq
    eps1, eps2 = rng.standard_normal((n, 3)), rng.standard_normal((n, 3))
    H1, H2 = rng.standard_normal((n, 2, 2, 2)), rng.standard_normal((n, 2, 2, 2))
    H1 = 0.5 * (H1 + H1.transpose(0, 1, 3, 2))
    H2 = 0.5 * (H2 + H2.transpose(0, 1, 3, 2))
    s1, s2 = rng.standard_normal((n, 2)), rng.standard_normal((n, 2))
    yield "gradient system", lambda b: kernels.gradient_system(eps1, eps2, H1, H2, s1, s2, backend=b)

    class _G:  # minimal stand-in for GradientSystemData
        M = rng.standard_normal((ne, nq, 4, 2))

    ls = least_squares_operator(_G, space)
    yield "least-squares gram", lambda b: kernels.element_gram(ls.Aval, ls.Adx, ls.Ady, ls.wdiag, qw, Gx, Gy,
                                                               backend=b)
    g = rng.standard_normal((ne, nq, 4))
    yield "least-squares load", lambda b: kernels.element_load(ls.Aval, ls.Adx, ls.Ady, ls.wdiag, qw, Gx, Gy, g,
                                                               backend=b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=40)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba unavailable (or ELASTORECON_NO_NUMBA set): timing numpy only")
    print(f"{'kernel':<22}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fn in cases(args.nx):
        ref = fn("numpy")
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        if HAVE_NUMBA:
            got = fn("numba")  # compiles
            for a, b in zip(np.atleast_1d(ref) if not isinstance(ref, tuple) else ref,
                            np.atleast_1d(got) if not isinstance(got, tuple) else got):
                np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)
            t_nb = best_of(lambda: fn("numba"), args.repeat)
            print(f"{name:<22}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")
        else:
            print(f"{name:<22}{t_np:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
