"""Unconstrained least-squares importance fitting (uLSIF).

Estimates the density ratio ``w(x) = p_nu(x) / p_de(x)`` of two 1-D
samples with a Gaussian-kernel model ``w(x) = sum_l alpha_l K(x, c_l)``
whose centers are numerator points. ``alpha`` solves the ridge system
``(H + lambda I) alpha = h`` with

    H[l, l'] = mean_j K(y_j, c_l) K(y_j, c_l')   (denominator samples y)
    h[l]     = mean_i K(x_i, c_l)                (numerator samples x)

Bandwidth and ridge strength are chosen by leave-one-out cross-validation
in closed form (Sherman-Morrison on the rank-one update of H).

The functions here are the reference route; :mod:`symdetect.kernels`
holds the vectorised/compiled column scorer used by the detector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import DataError, NumericError, ParameterError

DEFAULT_SIGMA_GRID = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0)
DEFAULT_LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0)
DEFAULT_MAX_CENTERS = 50


@dataclass(frozen=True)
class UlsifConfig:
    sigma_grid: tuple = DEFAULT_SIGMA_GRID
    lambda_grid: tuple = DEFAULT_LAMBDA_GRID
    max_centers: int = DEFAULT_MAX_CENTERS
    symmetrize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "sigma_grid", tuple(float(s) for s in self.sigma_grid))
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))

    def validate(self) -> None:
        if not self.sigma_grid or any(not (s > 0 and np.isfinite(s)) for s in self.sigma_grid):
            raise ParameterError("ulsif.sigma_grid: need a nonempty list of positive values")
        if not self.lambda_grid or any(not (v > 0 and np.isfinite(v)) for v in self.lambda_grid):
            raise ParameterError("ulsif.lambda_grid: need a nonempty list of positive values")
        if self.max_centers < 1:
            raise ParameterError("ulsif.max_centers: must be >= 1")


@dataclass(frozen=True, eq=False)
class UlsifModel:
    centers: np.ndarray
    sigma: float
    lam: float
    alpha: np.ndarray

    def raw(self, x) -> np.ndarray:
        """Unclamped ratio model evaluated at ``x``."""
        return gaussian_kernel(np.atleast_1d(x), self.centers, self.sigma) @ self.alpha

    def __call__(self, x) -> np.ndarray:
        return np.maximum(self.raw(x), 0.0)


@dataclass(frozen=True)
class AnomalyScore:
    score: float
    n_nu: int
    n_de: int
    chosen_sigma: float
    chosen_lambda: float
    reverse_sigma: float | None = None
    reverse_lambda: float | None = None


def gaussian_kernel(x, centers, sigma) -> np.ndarray:
    """``K[i, l] = exp(-(x_i - c_l)^2 / (2 sigma^2))``."""
    d = np.asarray(x, dtype=np.float64)[:, None] - np.asarray(centers, dtype=np.float64)[None, :]
    return np.exp(-(d * d) / (2.0 * sigma * sigma))


def _as_sample(x, name) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise DataError(f"{name} sample is empty")
    if not np.all(np.isfinite(a)):
        raise DataError(f"{name} sample contains non-finite values")
    return a


def _design(x, y, sigma, max_centers):
    centers = x[: min(max_centers, x.size)]
    Kx = gaussian_kernel(x, centers, sigma)  # (n_nu, b)
    Ky = gaussian_kernel(y, centers, sigma)  # (n_de, b)
    H = Ky.T @ Ky / y.size
    h = Kx.mean(axis=0)
    return centers, Kx, Ky, H, h


def _cho(A):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise NumericError(f"ridge system is not positive definite: {exc}") from exc


def fit(numerator, denominator, sigma: float, lam: float, max_centers: int = DEFAULT_MAX_CENTERS) -> UlsifModel:
    """Fit the ratio model with fixed bandwidth ``sigma`` and ridge ``lam``.

    Centers are the first ``min(max_centers, n_nu)`` numerator points.
    """
    x = _as_sample(numerator, "numerator")
    y = _as_sample(denominator, "denominator")
    if not (sigma > 0 and lam > 0):
        raise ParameterError(f"sigma and lambda must be > 0, got sigma={sigma}, lambda={lam}")
    centers, _, _, H, h = _design(x, y, sigma, max_centers)
    A = H + lam * np.eye(H.shape[0])
    alpha = linalg.cho_solve(_cho(A), h, check_finite=False)
    if not np.all(np.isfinite(alpha)):
        raise NumericError("ridge solve produced non-finite coefficients")
    return UlsifModel(centers.copy(), float(sigma), float(lam), alpha)


def loocv_score(numerator, denominator, sigma: float, lam: float, max_centers: int = DEFAULT_MAX_CENTERS) -> float:
    """Closed-form leave-one-out squared-loss of the ratio model.

    Fold ``i`` (``i < min(n_nu, n_de)``) removes numerator point ``i`` and
    denominator point ``i`` together and refits with the same centers.
    The held-out loss is ``0.5 * w(y_i)^2 - w(x_i)`` with ``w`` clamped
    at zero, averaged over folds.
    """
    x = _as_sample(numerator, "numerator")
    y = _as_sample(denominator, "denominator")
    n_nu, n_de = x.size, y.size
    if n_nu < 2 or n_de < 2:
        raise DataError("leave-one-out needs at least 2 points in each sample")
    _, Kx, Ky, H, h = _design(x, y, sigma, max_centers)
    return float(_loo_from_design(Kx, Ky, H, h, lam, n_nu, n_de))


def _loo_from_design(Kx, Ky, H, h, lam, n_nu, n_de):
    n = min(n_nu, n_de)
    b = H.shape[0]
    B = H + lam * (n_de - 1) / n_de * np.eye(b)
    c = _cho(B)
    Binv_phi = linalg.cho_solve(c, Ky[:n].T, check_finite=False)  # (b, n)
    Binv_h = linalg.cho_solve(c, h, check_finite=False)
    phi = Ky[:n].T
    psi = Kx[:n].T
    a = np.sum(phi * Binv_phi, axis=0)
    p = phi.T @ Binv_h
    q = np.sum(psi * Binv_phi, axis=0)
    Binv_psi = linalg.cho_solve(c, psi, check_finite=False)
    r = psi.T @ Binv_h
    t = np.sum(psi * Binv_psi, axis=0)
    s = (n_de - 1) / (n_de * (n_nu - 1))
    gd = n_nu * p - q
    gn = n_nu * r - t
    denom = n_de - a
    w_de = np.maximum(s * gd * n_de / denom, 0.0)
    w_nu = np.maximum(s * (gn + q * gd / denom), 0.0)
    return np.mean(0.5 * w_de * w_de - w_nu)


def loocv_table(numerator, denominator, sigma_grid, lambda_grid, max_centers=DEFAULT_MAX_CENTERS) -> np.ndarray:
    """LOOCV score for every (sigma, lambda) in the given grid order."""
    x = _as_sample(numerator, "numerator")
    y = _as_sample(denominator, "denominator")
    if x.size < 2 or y.size < 2:
        raise DataError("leave-one-out needs at least 2 points in each sample")
    table = np.empty((len(sigma_grid), len(lambda_grid)))
    for i, sigma in enumerate(sigma_grid):
        _, Kx, Ky, H, h = _design(x, y, sigma, max_centers)
        for j, lam in enumerate(lambda_grid):
            table[i, j] = _loo_from_design(Kx, Ky, H, h, lam, x.size, y.size)
    return table


def select_model(numerator, denominator, sigma_grid=DEFAULT_SIGMA_GRID, lambda_grid=DEFAULT_LAMBDA_GRID,
                 max_centers: int = DEFAULT_MAX_CENTERS) -> tuple:
    """Grid-search (sigma, lambda) by closed-form LOOCV.

    Ties go to the smallest sigma, then the smallest lambda.
    """
    if len(sigma_grid) == 0 or len(lambda_grid) == 0:
        raise ParameterError("sigma_grid and lambda_grid must be nonempty")
    for name, s in (("numerator", numerator), ("denominator", denominator)):
        a = _as_sample(s, name)
        if a.size < 2 or np.ptp(a) == 0:
            raise DataError(f"{name} sample is degenerate (zero variance)")
    sig = sorted(float(s) for s in sigma_grid)
    lams = sorted(float(v) for v in lambda_grid)
    table = loocv_table(numerator, denominator, sig, lams, max_centers)
    best = None
    for i in range(len(sig)):
        for j in range(len(lams)):
            if best is None or table[i, j] < table[best]:
                best = (i, j)
    return sig[best[0]], lams[best[1]]


def standardize_pair(f, f_prime):
    """Subtract the pooled mean and divide by the pooled (population) std."""
    a = _as_sample(f, "f")
    b = _as_sample(f_prime, "f_prime")
    pooled = np.concatenate([a, b])
    sd = pooled.std()
    if not sd > 0:
        raise DataError("pooled standard deviation is zero")
    mu = pooled.mean()
    return (a - mu) / sd, (b - mu) / sd


def directional_score(x, y, config: UlsifConfig):
    """Score one direction on already-standardized samples."""
    sigma, lam = select_model(x, y, config.sigma_grid, config.lambda_grid, config.max_centers)
    model = fit(x, y, sigma, lam, config.max_centers)
    w = model(x)
    return float(np.max(np.abs(1.0 - w))), sigma, lam


def anomaly_score(f, f_prime, config: UlsifConfig | None = None) -> AnomalyScore:
    """Maximum deviation of the fitted ratio from 1 over the points of ``f``.

    Both samples are standardized jointly; with ``config.symmetrize`` the
    result is the mean of the two directional scores.
    """
    config = config or UlsifConfig()
    config.validate()
    a = _as_sample(f, "f")
    b = _as_sample(f_prime, "f_prime")
    if a.size < 4 or b.size < 4:
        raise DataError(f"anomaly_score needs >= 4 points per sample, got {a.size} and {b.size}")
    x, y = standardize_pair(a, b)
    score, sigma, lam = directional_score(x, y, config)
    rs = rl = None
    if config.symmetrize:
        back, rs, rl = directional_score(y, x, config)
        score = 0.5 * (score + back)
    return AnomalyScore(score, a.size, b.size, sigma, lam, rs, rl)
