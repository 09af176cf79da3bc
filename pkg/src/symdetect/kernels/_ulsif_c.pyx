# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled column scorer. Mirrors ``_ulsif_py.score_columns``."""
import numpy as np

from libc.math cimport exp, sqrt, fabs
from libc.stdlib cimport malloc, free

cdef enum:
    STATUS_OK = 0
    STATUS_POOLED_CONSTANT = 1
    STATUS_F_CONSTANT = 2
    STATUS_FP_CONSTANT = 3
    STATUS_NOT_PD = 4


cdef int _cholesky(double* A, int b) noexcept nogil:
    # in place, lower triangle, row-major
    cdef int i, j, k
    cdef double s, d
    for j in range(b):
        s = A[j * b + j]
        for k in range(j):
            s -= A[j * b + k] * A[j * b + k]
        if s <= 0.0:
            return -1
        d = sqrt(s)
        A[j * b + j] = d
        for i in range(j + 1, b):
            s = A[i * b + j]
            for k in range(j):
                s -= A[i * b + k] * A[j * b + k]
            A[i * b + j] = s / d
    return 0


cdef void _forward(const double* L, double* v, int b) noexcept nogil:
    cdef int i, k
    cdef double s
    for i in range(b):
        s = v[i]
        for k in range(i):
            s -= L[i * b + k] * v[k]
        v[i] = s / L[i * b + i]


cdef void _backward(const double* L, double* v, int b) noexcept nogil:
    # solves L^T w = v in place
    cdef int i, k
    cdef double s
    for i in range(b - 1, -1, -1):
        s = v[i]
        for k in range(i + 1, b):
            s -= L[k * b + i] * v[k]
        v[i] = s / L[i * b + i]


cdef void _kernel_t(const double* x, int n, const double* c, int b, double g, double* K) noexcept nogil:
    # center-major: K[l * n + i] = exp(-(x_i - c_l)^2 * g)
    cdef int i, l
    cdef double d
    for l in range(b):
        for i in range(n):
            d = x[i] - c[l]
            K[l * n + i] = exp(-d * d * g)


cdef void _gram(const double* Ky, int b, int n_de, double* H) noexcept nogil:
    cdef int k, l, j
    cdef double acc
    for k in range(b):
        for l in range(k + 1):
            acc = 0.0
            for j in range(n_de):
                acc += Ky[k * n_de + j] * Ky[l * n_de + j]
            H[k * b + l] = acc / n_de
            H[l * b + k] = acc / n_de


cdef void _row_means(const double* K, int b, int n, double* h) noexcept nogil:
    cdef int k, i
    cdef double acc
    for k in range(b):
        acc = 0.0
        for i in range(n):
            acc += K[k * n + i]
        h[k] = acc / n


cdef int _direction(const double* x, int n_nu, const double* y, int n_de,
                    const double* sigmas, int ns, const double* lambdas, int nl, int bmax,
                    double* Kx, double* Ky, double* H, double* B, double* h, double* W,
                    double* score, double* best_sigma, double* best_lambda) noexcept nogil:
    cdef int b = bmax if bmax < n_nu else n_nu
    cdef int n = n_nu if n_nu < n_de else n_de
    cdef int w = 2 * n + 1  # row width of W: [phi_0..phi_n-1 | psi_0..psi_n-1 | h]
    cdef double s = (n_de - 1.0) / (n_de * (n_nu - 1.0))
    cdef int si, li, i, j, k
    cdef double g, acc, lam_eff, a, p, q, r, t, gd, gn, den, wde, wnu, loo, lkj, zk
    cdef double* row
    cdef double* prev
    cdef double best = 0.0
    cdef int have_best = 0
    cdef int bs = 0, bl = 0

    for si in range(ns):
        g = 1.0 / (2.0 * sigmas[si] * sigmas[si])
        _kernel_t(x, n_nu, x, b, g, Kx)
        _kernel_t(y, n_de, x, b, g, Ky)
        _gram(Ky, b, n_de, H)
        _row_means(Kx, b, n_nu, h)

        for li in range(nl):
            lam_eff = lambdas[li] * (n_de - 1.0) / n_de
            for k in range(b * b):
                B[k] = H[k]
            for k in range(b):
                B[k * b + k] += lam_eff
            if _cholesky(B, b) != 0:
                return STATUS_NOT_PD
            # W <- L^{-1} [phi | psi | h], one row per center
            for k in range(b):
                row = W + k * w
                for i in range(n):
                    row[i] = Ky[k * n_de + i]
                    row[n + i] = Kx[k * n_nu + i]
                row[2 * n] = h[k]
                for j in range(k):
                    lkj = B[k * b + j]
                    prev = W + j * w
                    for i in range(w):
                        row[i] -= lkj * prev[i]
                lkj = 1.0 / B[k * b + k]
                for i in range(w):
                    row[i] *= lkj
            loo = 0.0
            for i in range(n):
                a = 0.0; p = 0.0; q = 0.0; r = 0.0; t = 0.0
                for k in range(b):
                    row = W + k * w
                    zk = row[2 * n]
                    a += row[i] * row[i]
                    p += row[i] * zk
                    q += row[i] * row[n + i]
                    r += row[n + i] * zk
                    t += row[n + i] * row[n + i]
                gd = n_nu * p - q
                gn = n_nu * r - t
                den = n_de - a
                wde = s * gd * n_de / den
                wnu = s * (gn + q * gd / den)
                if wde < 0.0:
                    wde = 0.0
                if wnu < 0.0:
                    wnu = 0.0
                loo += 0.5 * wde * wde - wnu
            loo /= n
            if have_best == 0 or loo < best:
                best = loo
                bs = si
                bl = li
                have_best = 1

    # refit at the selected pair
    g = 1.0 / (2.0 * sigmas[bs] * sigmas[bs])
    _kernel_t(x, n_nu, x, b, g, Kx)
    _kernel_t(y, n_de, x, b, g, Ky)
    _gram(Ky, b, n_de, B)
    _row_means(Kx, b, n_nu, h)
    for k in range(b):
        B[k * b + k] += lambdas[bl]
    if _cholesky(B, b) != 0:
        return STATUS_NOT_PD
    _forward(B, h, b)
    _backward(B, h, b)
    acc = 0.0
    for i in range(n_nu):
        wnu = 0.0
        for k in range(b):
            wnu += h[k] * Kx[k * n_nu + i]
        if wnu < 0.0:
            wnu = 0.0
        wnu = fabs(1.0 - wnu)
        if wnu > acc:
            acc = wnu
    score[0] = acc
    best_sigma[0] = sigmas[bs]
    best_lambda[0] = lambdas[bl]
    return STATUS_OK


def score_columns(F, G, sigmas, lambdas, int bmax, bint symmetrize):
    """Score column k of ``F`` against column k of ``G`` for every k.

    ``sigmas`` and ``lambdas`` must be sorted ascending. Returns
    ``(scores, sigma, lambda, status)``; entries with nonzero status are NaN.
    """
    cdef double[:, ::1] Fv = np.ascontiguousarray(np.asarray(F, dtype=np.float64).T)
    cdef double[:, ::1] Gv = np.ascontiguousarray(np.asarray(G, dtype=np.float64).T)
    cdef double[::1] sg = np.ascontiguousarray(sigmas, dtype=np.float64)
    cdef double[::1] lm = np.ascontiguousarray(lambdas, dtype=np.float64)
    cdef int m = Fv.shape[0]
    cdef int n_nu = Fv.shape[1]
    cdef int n_de = Gv.shape[1]
    if Gv.shape[0] != m:
        raise ValueError("F and G must have the same number of columns")
    if n_nu < 2 or n_de < 2:
        raise ValueError("need at least 2 samples per column")
    if bmax < 1:
        raise ValueError("bmax must be >= 1")

    out_np = np.full(m, np.nan)
    sig_np = np.full(m, np.nan)
    lam_np = np.full(m, np.nan)
    st_np = np.zeros(m, dtype=np.int32)
    cdef double[::1] out = out_np
    cdef double[::1] osig = sig_np
    cdef double[::1] olam = lam_np
    cdef int[::1] st = st_np

    cdef int nmax = n_nu if n_nu > n_de else n_de
    cdef int b = bmax if bmax < nmax else nmax
    cdef double* xs = <double*> malloc(nmax * sizeof(double))
    cdef double* ys = <double*> malloc(nmax * sizeof(double))
    cdef double* Kx = <double*> malloc(nmax * b * sizeof(double))
    cdef double* Ky = <double*> malloc(nmax * b * sizeof(double))
    cdef double* H = <double*> malloc(b * b * sizeof(double))
    cdef double* B = <double*> malloc(b * b * sizeof(double))
    cdef double* hv = <double*> malloc(b * sizeof(double))
    cdef double* W = <double*> malloc(b * (2 * nmax + 1) * sizeof(double))
    if not (xs and ys and Kx and Ky and H and B and hv and W):
        free(xs); free(ys); free(Kx); free(Ky); free(H); free(B); free(hv); free(W)
        raise MemoryError()

    cdef int col, i, rc
    cdef double mu, var, sd, d, fmin, fmax, gmin, gmax
    cdef double s1, sg1, lm1, s2, sg2, lm2
    cdef int ns = sg.shape[0]
    cdef int nl = lm.shape[0]
    try:
        with nogil:
            for col in range(m):
                mu = 0.0
                fmin = Fv[col, 0]; fmax = fmin
                gmin = Gv[col, 0]; gmax = gmin
                for i in range(n_nu):
                    mu += Fv[col, i]
                    if Fv[col, i] < fmin: fmin = Fv[col, i]
                    if Fv[col, i] > fmax: fmax = Fv[col, i]
                for i in range(n_de):
                    mu += Gv[col, i]
                    if Gv[col, i] < gmin: gmin = Gv[col, i]
                    if Gv[col, i] > gmax: gmax = Gv[col, i]
                mu /= (n_nu + n_de)
                var = 0.0
                for i in range(n_nu):
                    d = Fv[col, i] - mu
                    var += d * d
                for i in range(n_de):
                    d = Gv[col, i] - mu
                    var += d * d
                sd = sqrt(var / (n_nu + n_de))
                if not sd > 0.0:
                    st[col] = STATUS_POOLED_CONSTANT
                    continue
                if fmax == fmin:
                    st[col] = STATUS_F_CONSTANT
                    continue
                if gmax == gmin:
                    st[col] = STATUS_FP_CONSTANT
                    continue
                for i in range(n_nu):
                    xs[i] = (Fv[col, i] - mu) / sd
                for i in range(n_de):
                    ys[i] = (Gv[col, i] - mu) / sd
                rc = _direction(xs, n_nu, ys, n_de, &sg[0], ns, &lm[0], nl, bmax,
                                Kx, Ky, H, B, hv, W, &s1, &sg1, &lm1)
                if rc == STATUS_OK and symmetrize:
                    rc = _direction(ys, n_de, xs, n_nu, &sg[0], ns, &lm[0], nl, bmax,
                                    Kx, Ky, H, B, hv, W, &s2, &sg2, &lm2)
                    s1 = 0.5 * (s1 + s2)
                st[col] = rc
                if rc == STATUS_OK:
                    out[col] = s1
                    osig[col] = sg1
                    olam[col] = lm1
    finally:
        free(xs); free(ys); free(Kx); free(Ky); free(H); free(B); free(hv); free(W)
    return out_np, sig_np, lam_np, st_np
