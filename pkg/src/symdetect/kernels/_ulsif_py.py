"""Pure-numpy column scorer, batched over columns.

Same contract as the compiled ``_ulsif_c.score_columns``; see
:func:`symdetect.kernels.score_columns`.
"""
import numpy as np

STATUS_OK = 0
STATUS_POOLED_CONSTANT = 1
STATUS_F_CONSTANT = 2
STATUS_FP_CONSTANT = 3


def _direction(x, y, sigmas, lambdas, bmax):
    """x: (m, n_nu) numerator, y: (m, n_de) denominator, both standardized."""
    m, n_nu = x.shape
    n_de = y.shape[1]
    n = min(n_nu, n_de)
    b = min(bmax, n_nu)
    c = x[:, :b]
    eye = np.eye(b)
    s = (n_de - 1) / (n_de * (n_nu - 1))
    table = np.empty((m, len(sigmas), len(lambdas)))
    designs = []
    for i, sigma in enumerate(sigmas):
        g = 1.0 / (2.0 * sigma * sigma)
        dx = x[:, :, None] - c[:, None, :]
        dy = y[:, :, None] - c[:, None, :]
        Kx = np.exp(-(dx * dx) * g)  # (m, n_nu, b)
        Ky = np.exp(-(dy * dy) * g)  # (m, n_de, b)
        H = np.einsum("mjk,mjl->mkl", Ky, Ky) / n_de
        h = Kx.mean(axis=1)
        designs.append((Kx, H, h))
        phi = np.swapaxes(Ky[:, :n], 1, 2)  # (m, b, n)
        psi = np.swapaxes(Kx[:, :n], 1, 2)
        rhs = np.concatenate([phi, psi, h[:, :, None]], axis=2)
        for j, lam in enumerate(lambdas):
            B = H + (lam * (n_de - 1) / n_de) * eye
            sol = np.linalg.solve(B, rhs)
            Bphi, Bpsi, Bh = sol[:, :, :n], sol[:, :, n : 2 * n], sol[:, :, 2 * n]
            a = np.einsum("mbi,mbi->mi", phi, Bphi)
            p = np.einsum("mbi,mb->mi", phi, Bh)
            q = np.einsum("mbi,mbi->mi", psi, Bphi)
            r = np.einsum("mbi,mb->mi", psi, Bh)
            t = np.einsum("mbi,mbi->mi", psi, Bpsi)
            gd = n_nu * p - q
            gn = n_nu * r - t
            den = n_de - a
            w_de = np.maximum(s * gd * n_de / den, 0.0)
            w_nu = np.maximum(s * (gn + q * gd / den), 0.0)
            table[:, i, j] = np.mean(0.5 * w_de * w_de - w_nu, axis=1)

    flat = table.reshape(m, -1)
    best = np.argmin(flat, axis=1)  # first minimum: smallest sigma, then lambda
    bi, bj = np.divmod(best, len(lambdas))
    scores = np.empty(m)
    for key in np.unique(best):
        cols = np.nonzero(best == key)[0]
        i, j = divmod(int(key), len(lambdas))
        Kx, H, h = designs[i]
        alpha = np.linalg.solve(H[cols] + lambdas[j] * eye, h[cols][:, :, None])[:, :, 0]
        w = np.maximum(np.einsum("mnb,mb->mn", Kx[cols], alpha), 0.0)
        scores[cols] = np.max(np.abs(1.0 - w), axis=1)
    return scores, np.asarray(sigmas)[bi], np.asarray(lambdas)[bj]


def score_columns(F, G, sigmas, lambdas, bmax, symmetrize):
    """Score column k of ``F`` against column k of ``G`` for every k.

    Returns ``(scores, sigma, lambda, status)``; entries with nonzero status
    are NaN.
    """
    F = np.ascontiguousarray(F, dtype=np.float64)
    G = np.ascontiguousarray(G, dtype=np.float64)
    m = F.shape[1]
    scores = np.full(m, np.nan)
    sig = np.full(m, np.nan)
    lam = np.full(m, np.nan)
    status = np.zeros(m, dtype=np.int32)

    pooled = np.concatenate([F, G], axis=0)
    mu = pooled.mean(axis=0)
    sd = pooled.std(axis=0)
    status[np.ptp(G, axis=0) == 0] = STATUS_FP_CONSTANT
    status[np.ptp(F, axis=0) == 0] = STATUS_F_CONSTANT
    status[~(sd > 0)] = STATUS_POOLED_CONSTANT
    ok = np.nonzero(status == STATUS_OK)[0]
    if ok.size == 0:
        return scores, sig, lam, status

    x = ((F[:, ok] - mu[ok]) / sd[ok]).T.copy()
    y = ((G[:, ok] - mu[ok]) / sd[ok]).T.copy()
    fwd, s1, l1 = _direction(x, y, sigmas, lambdas, bmax)
    if symmetrize:
        back, _, _ = _direction(y, x, sigmas, lambdas, bmax)
        fwd = 0.5 * (fwd + back)
    scores[ok], sig[ok], lam[ok] = fwd, s1, l1
    return scores, sig, lam, status
