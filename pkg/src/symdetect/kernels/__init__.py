"""Column-scoring kernel with a compiled core and a numpy fallback.

The compiled extension is used when it imports; set
``SYMDETECT_BACKEND=python`` to force the fallback. Both backends score
column ``k`` of ``F`` against column ``k`` of ``G`` with the uLSIF
anomaly score (joint standardization, LOOCV grid search, max |1 - w|).
"""
import os
from dataclasses import dataclass

import numpy as np

from ..errors import DataError, NumericError
from . import _ulsif_py

try:
    from . import _ulsif_c
except ImportError:  # extension not built
    _ulsif_c = None

STATUS_OK = 0
STATUS_POOLED_CONSTANT = 1
STATUS_F_CONSTANT = 2
STATUS_FP_CONSTANT = 3
STATUS_NOT_PD = 4

HAVE_COMPILED = _ulsif_c is not None


def _default_backend() -> str:
    wanted = os.environ.get("SYMDETECT_BACKEND", "").strip().lower()
    if wanted in ("python", "py", "numpy"):
        return "python"
    if wanted in ("compiled", "c", "cython") and not HAVE_COMPILED:
        raise ImportError("SYMDETECT_BACKEND=compiled but the extension is not built")
    return "compiled" if HAVE_COMPILED else "python"


BACKEND = _default_backend()


@dataclass(frozen=True)
class ColumnScores:
    scores: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray
    status: np.ndarray


def available_backends() -> list:
    return (["compiled"] if HAVE_COMPILED else []) + ["python"]


def score_columns(F, G, sigma_grid, lambda_grid, max_centers, symmetrize, backend=None) -> ColumnScores:
    """Raw per-column scores; degenerate columns come back NaN with a status code."""
    backend = backend or BACKEND
    F = np.asarray(F, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    if F.ndim != 2 or G.ndim != 2 or F.shape[1] != G.shape[1]:
        raise DataError(f"column blocks must be 2-D with equal column counts, got {F.shape} and {G.shape}")
    if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
        raise DataError("column samples contain non-finite values")
    sig = np.sort(np.asarray(sigma_grid, dtype=np.float64))
    lam = np.sort(np.asarray(lambda_grid, dtype=np.float64))
    if backend == "compiled":
        if not HAVE_COMPILED:
            raise ImportError("compiled backend requested but the extension is not built")
        out = _ulsif_c.score_columns(F, G, sig, lam, int(max_centers), bool(symmetrize))
    elif backend == "python":
        try:
            out = _ulsif_py.score_columns(F, G, sig, lam, int(max_centers), bool(symmetrize))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"ridge solve failed: {exc}") from exc
    else:
        raise ValueError(f"unknown backend {backend!r}")
    result = ColumnScores(*out)
    if np.any(result.status == STATUS_NOT_PD):
        raise NumericError("ridge system lost positive definiteness")
    return result
