"""Virtual-Probe reconstruction of a frequency grid from sparse samples.

The grid is modelled as sparse in the orthonormal 2-D DCT-II basis. A
random subset of cells is "measured"; orthogonal matching pursuit picks
basis functions that explain the samples, the inverse DCT fills in the
rest, and measured cells keep their measured values.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dctn, idctn

from .errors import DimensionError, ParameterError
from .fingerprint import DeviceFingerprint, RoGrid

DEFAULT_STOP_TOL = 0.05  # MHz, RMS residual on sampled cells


@dataclass(frozen=True, eq=False)
class SampleMask:
    rows: int
    cols: int
    flat: np.ndarray  # sorted flat indices (row * cols + col)

    def __post_init__(self):
        a = np.array(self.flat, dtype=np.int64)
        a.setflags(write=False)
        object.__setattr__(self, "flat", a)

    @property
    def locations(self) -> list:
        return [(int(i // self.cols), int(i % self.cols)) for i in self.flat]

    @property
    def size(self) -> int:
        return int(self.flat.size)

    @property
    def fraction(self) -> float:
        return self.size / (self.rows * self.cols)

    def __eq__(self, other):
        if not isinstance(other, SampleMask):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and np.array_equal(
            self.flat, other.flat
        )


@dataclass(frozen=True)
class VpEstimate:
    reconstructed: RoGrid
    rmse_mhz: float
    n_atoms: int


def n_samples(rows: int, cols: int, fraction: float) -> int:
    # round-half-up; Python's round() is banker's rounding
    return int(np.floor(fraction * rows * cols + 0.5))


def make_mask(rows: int, cols: int, fraction: float, seed) -> SampleMask:
    if not (0.0 < fraction <= 1.0):
        raise ParameterError(f"fraction must be in (0, 1], got {fraction}")
    m = n_samples(rows, cols, fraction)
    if m < 1:
        raise ParameterError(
            f"fraction {fraction} of a {rows}x{cols} grid samples no cells"
        )
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(rows * cols, size=m, replace=False))
    return SampleMask(rows, cols, flat)


def mask_from_locations(rows: int, cols: int, locations) -> SampleMask:
    flat = sorted({int(r) * cols + int(c) for r, c in locations})
    for r, c in locations:
        if not (0 <= r < rows and 0 <= c < cols):
            raise DimensionError(f"mask location {(r, c)} outside {rows}x{cols} grid")
    return SampleMask(rows, cols, np.array(flat, dtype=np.int64))


@lru_cache(maxsize=16)
def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II synthesis matrix: column k is the k-th basis vector."""
    i = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[:, 0] = np.sqrt(1.0 / n)
    m.setflags(write=False)
    return m


def dct2(grid: np.ndarray) -> np.ndarray:
    return dctn(np.asarray(grid, dtype=np.float64), type=2, norm="ortho")


def idct2(coefs: np.ndarray) -> np.ndarray:
    return idctn(np.asarray(coefs, dtype=np.float64), type=2, norm="ortho")


def _dictionary_for(mask: SampleMask) -> np.ndarray:
    key = (mask.rows, mask.cols, mask.flat.tobytes())
    return _cached_dictionary(key)


@lru_cache(maxsize=4)
def _cached_dictionary(key) -> np.ndarray:
    rows, cols, raw = key
    A = restricted_dictionary(rows, cols, np.frombuffer(raw, dtype=np.int64))
    A.setflags(write=False)
    return A


def restricted_dictionary(rows: int, cols: int, flat: np.ndarray) -> np.ndarray:
    """2-D DCT atoms evaluated at the sampled cells, shape (m, rows*cols).

    Column ``u * cols + v`` is basis function (u, v), matching the
    row-major layout of :func:`dct2` coefficients.
    """
    r = flat // cols
    c = flat % cols
    dr = dct_matrix(rows)[r]  # (m, rows)
    dc = dct_matrix(cols)[c]  # (m, cols)
    return (dr[:, :, None] * dc[:, None, :]).reshape(flat.size, rows * cols)


def omp(A: np.ndarray, y: np.ndarray, max_atoms: int, stop_tol: float, forced=()):
    """Orthogonal matching pursuit with an incremental QR factorization.

    ``forced`` atoms enter the active set before any greedy selection.
    Selection uses correlation with unit-normalized atoms; ties go to the
    lowest column index. Returns ``(support, coefficients)``.
    """
    m, n = A.shape
    norms = np.linalg.norm(A, axis=0)
    usable = norms > 1e-12 * max(norms.max(), 1.0)
    inv_norms = np.where(usable, 1.0 / np.where(usable, norms, 1.0), 0.0)
    max_atoms = min(max_atoms, m, int(usable.sum()))

    Q = np.empty((m, max_atoms))
    support: list = []
    r = y.astype(np.float64).copy()

    def add(j):
        q = A[:, j].copy()
        for _ in range(2):  # twice is enough (Kahan-Parlett)
            q -= Q[:, : len(support)] @ (Q[:, : len(support)].T @ q)
        nq = np.linalg.norm(q)
        if nq <= 1e-10 * norms[j]:
            return False
        Q[:, len(support)] = q / nq
        support.append(j)
        return True

    for j in forced:
        if len(support) < max_atoms:
            add(j)
            qk = Q[:, len(support) - 1]
            r -= qk * (qk @ r)

    blocked = ~usable
    blocked[support] = True
    while len(support) < max_atoms:
        if np.sqrt(np.mean(r * r)) < stop_tol:
            break
        corr = np.abs(A.T @ r) * inv_norms
        corr[blocked] = -1.0
        j = int(np.argmax(corr))
        if corr[j] <= 0.0:
            break
        blocked[j] = True
        if not add(j):
            continue
        qk = Q[:, len(support) - 1]
        r -= qk * (qk @ r)

    k = len(support)
    if k == 0:
        return np.array([], dtype=np.int64), np.array([])
    Qk = Q[:, :k]
    R = Qk.T @ A[:, support]
    coef = np.linalg.solve(np.triu(R), Qk.T @ y)
    return np.array(support, dtype=np.int64), coef


def rmse(a, b) -> float:
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(np.sqrt(np.mean(d * d)))


def vp_reconstruct(
    grid,
    mask: SampleMask,
    stop_tol: float = DEFAULT_STOP_TOL,
    max_atoms: int | None = None,
) -> VpEstimate:
    """Estimate the full grid from the cells in ``mask``.

    The sample mean is removed first and the DC atom is always in the
    active set, so large mean offsets never compete with the shape terms.
    ``max_atoms`` defaults to ``floor(mask.size / 4)`` (DC included).
    """
    measured = grid.freqs if isinstance(grid, RoGrid) else np.asarray(grid, dtype=np.float64)
    if measured.ndim != 2 or measured.shape != (mask.rows, mask.cols):
        raise DimensionError(
            f"mask is {mask.rows}x{mask.cols} but grid is {'x'.join(map(str, measured.shape))}"
        )
    R, C = measured.shape
    flat_measured = measured.reshape(-1)

    if mask.size == R * C:
        coefs = dct2(measured)
        scale = max(float(np.abs(coefs).max()), 1.0)
        n_atoms = int(np.count_nonzero(np.abs(coefs) > 1e-12 * scale))
        recon = measured.copy()
    else:
        cap = max_atoms if max_atoms is not None else mask.size // 4
        cap = max(cap, 1)
        y = flat_measured[mask.flat]
        offset = float(y.mean())
        A = _dictionary_for(mask)
        support, coef = omp(A, y - offset, cap, stop_tol, forced=(0,))
        coefs = np.zeros(R * C)
        coefs[support] = coef
        n_atoms = int(np.count_nonzero(coefs))
        recon = idct2(coefs.reshape(R, C)) + offset
        recon.reshape(-1)[mask.flat] = y

    return VpEstimate(RoGrid(recon), rmse(recon, measured), n_atoms)


def rmse_profile(
    device: DeviceFingerprint,
    mask: SampleMask,
    stop_tol: float = DEFAULT_STOP_TOL,
    max_atoms: int | None = None,
) -> list:
    """Reconstruction RMSE of every path, in path_index order, same mask."""
    return [e.rmse_mhz for e in estimate_device(device, mask, stop_tol, max_atoms)]


def estimate_device(device, mask, stop_tol=DEFAULT_STOP_TOL, max_atoms=None) -> list:
    ordered = sorted(device.paths, key=lambda p: p.path_index)
    return [vp_reconstruct(p.grid, mask, stop_tol, max_atoms) for p in ordered]
