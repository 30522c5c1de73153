"""
Hot loops: element Gram matrices, element load vectors and the pointwise
gradient-system algebra.

Each kernel has an ``@njit`` implementation and a vectorized numpy one with
identical semantics. ``backend=None`` picks numba when available.

Element operators are described per quadrature point by coefficient arrays
``Aval, Adx, Ady`` of shape ``(ne, nq, nc, nf)``: row ``c`` of the operator
applied to a field with ``nf`` scalar components is

    sum_f Aval[c, f] * phi + Adx[c, f] * dphi/dx + Ady[c, f] * dphi/dy

on the nodal basis. The basis is collocated at the Gauss-Lobatto quadrature
points, so ``phi_l(x_q) = delta_lq``.
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit

_CHUNK = 64


def _use_numba(backend):
    if backend is None:
        return HAVE_NUMBA
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend == "numba" and HAVE_NUMBA


@njit(cache=True)
def _gram_numba(Aval, Adx, Ady, wdiag, qw, Gx, Gy):
    ne, nq, nc, nf = Aval.shape
    nloc = Gx.shape[1]
    nl = nf * nloc
    out = np.zeros((ne, nl, nl))
    row = np.zeros(nl)
    idx = np.empty(nl, dtype=np.int64)
    for e in range(ne):
        for q in range(nq):
            for c in range(nc):
                wt = qw[e, q] * wdiag[e, q, c]
                if wt == 0.0:
                    continue
                m = 0
                for f in range(nf):
                    av = Aval[e, q, c, f]
                    ax = Adx[e, q, c, f]
                    ay = Ady[e, q, c, f]
                    if av == 0.0 and ax == 0.0 and ay == 0.0:
                        continue
                    for l in range(nloc):
                        v = ax * Gx[q, l] + ay * Gy[q, l]
                        if l == q:
                            v += av
                        if v != 0.0:
                            k = f * nloc + l
                            row[k] = v
                            idx[m] = k
                            m += 1
                for a in range(m):
                    i = idx[a]
                    ri = wt * row[i]
                    for b in range(m):
                        j = idx[b]
                        out[e, i, j] += ri * row[j]
                for a in range(m):
                    row[idx[a]] = 0.0
    return out


def _row_operators(Aval, Adx, Ady, Gx, Gy):
    nq = Gx.shape[0]
    eye = np.eye(nq, Gx.shape[1])
    B = (np.einsum("eqcf,ql->eqcfl", Aval, eye)
         + np.einsum("eqcf,ql->eqcfl", Adx, Gx)
         + np.einsum("eqcf,ql->eqcfl", Ady, Gy))
    ne, _, nc, nf, nloc = B.shape
    return B.reshape(ne, nq, nc, nf * nloc)


def _gram_numpy(Aval, Adx, Ady, wdiag, qw, Gx, Gy):
    ne, nq, nc, nf = Aval.shape
    nl = nf * Gx.shape[1]
    out = np.empty((ne, nl, nl))
    for s in range(0, ne, _CHUNK):
        sl = slice(s, s + _CHUNK)
        B = _row_operators(Aval[sl], Adx[sl], Ady[sl], Gx, Gy)
        W = qw[sl, :, None] * wdiag[sl]
        out[sl] = np.einsum("eqci,eqc,eqcj->eij", B, W, B, optimize=True)
    return out


def element_gram(Aval, Adx, Ady, wdiag, qw, Gx, Gy, backend=None):
    """Element matrices ``K_e = sum_q qw_q B_q^T diag(wdiag_q) B_q``, shape (ne, nl, nl)."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (Aval, Adx, Ady, wdiag, qw, Gx, Gy)]
    if _use_numba(backend):
        return _gram_numba(*args)
    return _gram_numpy(*args)


@njit(cache=True)
def _load_numba(Aval, Adx, Ady, wdiag, qw, Gx, Gy, g):
    ne, nq, nc, nf = Aval.shape
    nloc = Gx.shape[1]
    out = np.zeros((ne, nf * nloc))
    for e in range(ne):
        for q in range(nq):
            for c in range(nc):
                wt = qw[e, q] * wdiag[e, q, c] * g[e, q, c]
                if wt == 0.0:
                    continue
                for f in range(nf):
                    av = Aval[e, q, c, f]
                    ax = Adx[e, q, c, f]
                    ay = Ady[e, q, c, f]
                    for l in range(nloc):
                        v = ax * Gx[q, l] + ay * Gy[q, l]
                        if l == q:
                            v += av
                        out[e, f * nloc + l] += wt * v
    return out


def _load_numpy(Aval, Adx, Ady, wdiag, qw, Gx, Gy, g):
    ne = Aval.shape[0]
    out = np.empty((ne, Aval.shape[3] * Gx.shape[1]))
    for s in range(0, ne, _CHUNK):
        sl = slice(s, s + _CHUNK)
        B = _row_operators(Aval[sl], Adx[sl], Ady[sl], Gx, Gy)
        W = qw[sl, :, None] * wdiag[sl] * g[sl]
        out[sl] = np.einsum("eqci,eqc->ei", B, W)
    return out


def element_load(Aval, Adx, Ady, wdiag, qw, Gx, Gy, g, backend=None):
    """Element vectors ``sum_q qw_q B_q^T diag(wdiag_q) g_q``, shape (ne, nl)."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (Aval, Adx, Ady, wdiag, qw, Gx, Gy, g)]
    if _use_numba(backend):
        return _load_numba(*args)
    return _load_numpy(*args)


@njit(cache=True)
def _gradient_system_numba(eps1, eps2, H1, H2, s1, s2):
    # eps: (n, 3) as (xx, yy, xy); H: (n, 2, 2, 2) indexed [k, i, j]; s: (n, 2) source terms
    n = eps1.shape[0]
    M = np.empty((n, 4, 2))
    f = np.empty((n, 4))
    detE = np.empty(n)
    Ainv = np.empty((4, 4))
    Bm = np.empty((4, 2))
    for p in range(n):
        t1 = eps1[p, 0] + eps1[p, 1]
        t2 = eps2[p, 0] + eps2[p, 1]
        d1xx = eps1[p, 0] - 0.5 * t1
        d1xy = eps1[p, 2]
        d2xx = eps2[p, 0] - 0.5 * t2
        d2xy = eps2[p, 2]
        exx = t1 * d2xx - t2 * d1xx
        exy = t1 * d2xy - t2 * d1xy
        det = -(exx * exx + exy * exy)
        detE[p] = det
        if det == 0.0:
            for i in range(4):
                f[p, i] = np.nan
                for j in range(2):
                    M[p, i, j] = np.nan
            continue
        # E = [[exx, exy], [exy, -exx]] so E^-1 = E / (exx^2 + exy^2)
        s = -1.0 / det
        ixx = exx * s
        ixy = exy * s
        iyy = -exx * s
        # top blocks 2*epsD2 E^-1, -2*epsD1 E^-1; bottom -t2 E^-1, t1 E^-1
        Ainv[0, 0] = 2.0 * (d2xx * ixx + d2xy * ixy)
        Ainv[0, 1] = 2.0 * (d2xx * ixy + d2xy * iyy)
        Ainv[1, 0] = 2.0 * (d2xy * ixx - d2xx * ixy)
        Ainv[1, 1] = 2.0 * (d2xy * ixy - d2xx * iyy)
        Ainv[0, 2] = -2.0 * (d1xx * ixx + d1xy * ixy)
        Ainv[0, 3] = -2.0 * (d1xx * ixy + d1xy * iyy)
        Ainv[1, 2] = -2.0 * (d1xy * ixx - d1xx * ixy)
        Ainv[1, 3] = -2.0 * (d1xy * ixy - d1xx * iyy)
        Ainv[2, 0] = -t2 * ixx
        Ainv[2, 1] = -t2 * ixy
        Ainv[3, 0] = -t2 * ixy
        Ainv[3, 1] = -t2 * iyy
        Ainv[2, 2] = t1 * ixx
        Ainv[2, 3] = t1 * ixy
        Ainv[3, 2] = t1 * ixy
        Ainv[3, 3] = t1 * iyy
        for m in range(2):
            H = H1 if m == 0 else H2
            for i in range(2):
                gt = H[p, 0, i, 0] + H[p, 1, i, 1]
                dv = 0.5 * (H[p, i, 0, 0] + H[p, i, 1, 1])
                Bm[2 * m + i, 0] = 0.5 * gt
                Bm[2 * m + i, 1] = dv
        for i in range(4):
            for j in range(2):
                acc = 0.0
                for k in range(4):
                    acc += Ainv[i, k] * Bm[k, j]
                M[p, i, j] = acc
            f[p, i] = -(Ainv[i, 0] * s1[p, 0] + Ainv[i, 1] * s1[p, 1]
                        + Ainv[i, 2] * s2[p, 0] + Ainv[i, 3] * s2[p, 1])
    return M, f, detE


def _gradient_system_numpy(eps1, eps2, H1, H2, s1, s2):
    from .operators import assemble_A_inverse, build_B, build_E

    E, detE = build_E(eps1, eps2)
    with np.errstate(divide="ignore", invalid="ignore"):
        Ainv = assemble_A_inverse(eps1, eps2)
    B = np.concatenate([build_B(H1), build_B(H2)], axis=1)
    M = Ainv @ B
    f = -np.einsum("pij,pj->pi", Ainv, np.concatenate([s1, s2], axis=1))
    return M, f, detE


def gradient_system(eps1, eps2, H1, H2, s1, s2, backend=None):
    """Pointwise ``M = A^-1 B`` (n, 4, 2), ``f = -A^-1 s`` (n, 4) and ``det E`` (n,)."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (eps1, eps2, H1, H2, s1, s2)]
    if _use_numba(backend):
        return _gradient_system_numba(*args)
    return _gradient_system_numpy(*args)
