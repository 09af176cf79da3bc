import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from symdetect import kernels
from symdetect.errors import DataError, ParameterError
from symdetect.ulsif import (
    UlsifConfig,
    anomaly_score,
    fit,
    gaussian_kernel,
    loocv_score,
    loocv_table,
    select_model,
)


def dense_alpha(x, y, sigma, lam, b):
    # oracle: build the system entry by entry and invert it explicitly
    c = x[:b]
    H = np.zeros((b, b))
    for yj in y:
        k = np.exp(-((yj - c) ** 2) / (2 * sigma**2))
        H += np.outer(k, k)
    H /= len(y)
    h = np.mean([np.exp(-((xi - c) ** 2) / (2 * sigma**2)) for xi in x], axis=0)
    return np.linalg.inv(H + lam * np.eye(b)) @ h


def literal_loocv(x, y, sigma, lam, b):
    # oracle: refit with point i removed from both samples, same centers
    c = x[:b]
    n = min(len(x), len(y))
    losses = []
    for i in range(n):
        xr, yr = np.delete(x, i), np.delete(y, i)
        Ky = gaussian_kernel(yr, c, sigma)
        H = Ky.T @ Ky / len(yr)
        h = gaussian_kernel(xr, c, sigma).mean(axis=0)
        a = np.linalg.solve(H + lam * np.eye(len(c)), h)
        w_de = max(0.0, float((gaussian_kernel(y[i:i + 1], c, sigma) @ a)[0]))
        w_nu = max(0.0, float((gaussian_kernel(x[i:i + 1], c, sigma) @ a)[0]))
        losses.append(0.5 * w_de**2 - w_nu)
    return float(np.mean(losses))


def test_alpha_matches_dense_solve():
    rng = np.random.default_rng(0)
    for _ in range(20):
        n_nu, n_de = rng.integers(5, 30, size=2)
        x, y = rng.standard_normal(n_nu), rng.standard_normal(n_de) + 0.3
        sigma, lam = rng.choice([0.3, 0.7, 1.5]), rng.choice([1e-2, 0.1, 1.0])
        b = int(rng.integers(1, 21))
        m = fit(x, y, sigma, lam, max_centers=b)
        assert np.allclose(m.alpha, dense_alpha(x, y, sigma, lam, min(b, n_nu)), atol=1e-8, rtol=0)


def test_closed_form_loocv_matches_refit():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n_nu, n_de = rng.integers(4, 30, size=2)
        x, y = rng.standard_normal(n_nu), 1.2 * rng.standard_normal(n_de)
        sigma, lam, b = rng.choice([0.25, 0.5, 1.0, 2.0]), rng.choice([1e-3, 0.1, 1.0]), int(rng.integers(1, 21))
        fast = loocv_score(x, y, sigma, lam, b)
        slow = literal_loocv(x, y, sigma, lam, min(b, n_nu))
        assert abs(fast - slow) <= 1e-6 * max(1.0, abs(slow))


def test_fit_deterministic():
    x, y = np.linspace(-1, 1, 20), np.linspace(-1.2, 0.8, 25)
    assert np.array_equal(fit(x, y, 0.5, 0.1).alpha, fit(x, y, 0.5, 0.1).alpha)


def test_identical_samples_ratio_near_one():
    x = np.random.default_rng(2).standard_normal(50)
    w = fit(x, x, 1.0, 0.1)(x)
    assert np.all((w >= 0.5) & (w <= 2.0))


def test_shifted_numerator_ratio_direction():
    wins = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x, y = rng.normal(1, 1, 500), rng.normal(0, 1, 500)
        s, l = select_model(x, y)
        m = fit(x, y, s, l)
        wins += m(1.0)[0] > m(-1.0)[0]
    assert wins >= 19


def test_fit_errors():
    with pytest.raises(DataError):
        fit([np.nan, 1.0], [1.0, 2.0], 1.0, 0.1)
    with pytest.raises(DataError):
        fit([], [1.0], 1.0, 0.1)
    with pytest.raises(ParameterError):
        fit([1.0, 2.0], [1.0, 2.0], 0.0, 0.1)


def test_select_singleton_and_argmin():
    rng = np.random.default_rng(3)
    x, y = rng.standard_normal(20), rng.standard_normal(20) + 0.5
    assert select_model(x, y, [0.7], [0.05]) == (0.7, 0.05)
    s, l = select_model(x, y)
    cfg = UlsifConfig()
    table = loocv_table(x, y, cfg.sigma_grid, cfg.lambda_grid)
    i, j = cfg.sigma_grid.index(s), cfg.lambda_grid.index(l)
    assert np.all(table[i, j] <= table)


def test_select_degenerate_names_sample():
    with pytest.raises(DataError, match="denominator"):
        select_model([1.0, 2.0, 3.0], [5.0, 5.0, 5.0])
    with pytest.raises(ParameterError):
        select_model([1.0, 2.0], [1.0, 3.0], [], [0.1])


def test_identical_samples_score_floor():
    for seed in range(5):
        f = 400 + np.random.default_rng(seed).standard_normal(33)
        assert anomaly_score(f, f).score <= 0.5


def test_large_shift_score():
    f0 = np.random.default_rng(4).standard_normal(40)
    g = np.random.default_rng(5).standard_normal(40)
    # +10 pooled std after standardization: shift far beyond both spreads
    assert anomaly_score(f0 + 100.0, g).score >= 0.9


def test_anomaly_errors():
    with pytest.raises(DataError):
        anomaly_score([1, 2, 3], [1, 2, 3, 4])
    with pytest.raises(DataError):
        anomaly_score([2.0] * 5, [2.0] * 5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-1e3, 1e3), st.floats(0.01, 100))
def test_affine_invariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    f, g = rng.standard_normal(12), rng.standard_normal(12) * 1.3 + 0.4
    a = anomaly_score(f, g).score
    b = anomaly_score(shift + scale * f, shift + scale * g).score
    assert abs(a - b) < 1e-9 * max(1.0, abs(a))


def test_symmetrize_flag():
    rng = np.random.default_rng(6)
    f, g = rng.standard_normal(20), rng.standard_normal(20) + 1
    one = anomaly_score(f, g, UlsifConfig(symmetrize=False))
    both = anomaly_score(f, g)
    back = anomaly_score(g, f, UlsifConfig(symmetrize=False))
    assert both.score == pytest.approx(0.5 * (one.score + back.score), abs=1e-12)
    assert one.reverse_sigma is None and both.reverse_sigma is not None


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_kernel_matches_reference(backend):
    rng = np.random.default_rng(7)
    F = 400 + rng.standard_normal((15, 8))
    G = 400 + rng.standard_normal((15, 8)) + np.linspace(0, 2, 8)
    cfg = UlsifConfig()
    res = kernels.score_columns(F, G, cfg.sigma_grid, cfg.lambda_grid, cfg.max_centers, True, backend)
    ref = [anomaly_score(F[:, k], G[:, k]) for k in range(8)]
    assert np.allclose(res.scores, [r.score for r in ref], rtol=1e-9, atol=1e-9)
    assert np.array_equal(res.sigma, [r.chosen_sigma for r in ref])
    assert np.all(res.status == 0)


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_kernel_status_codes(backend):
    F = np.array([[1.0, 1.0, 1.0, 2.0], [1.0, 2.0, 1.0, 3.0], [1.0, 3.0, 1.0, 4.0]])
    G = np.array([[1.0, 5.0, 2.0, 2.0], [1.0, 5.0, 3.0, 1.0], [1.0, 5.0, 4.0, 3.0]])
    res = kernels.score_columns(F, G, [1.0], [0.1], 50, True, backend)
    assert list(res.status) == [1, 3, 2, 0]
    assert np.isnan(res.scores[:3]).all() and np.isfinite(res.scores[3])


def test_kernel_rejects_nonfinite():
    with pytest.raises(DataError):
        kernels.score_columns(np.array([[np.nan], [1.0]]), np.ones((2, 1)), [1.0], [0.1], 5, True)
