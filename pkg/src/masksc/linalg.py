"""Dense linear-algebra kernels used throughout the library.

Tolerances are fixed here once: ``SOLVE_RTOL`` for least-squares residual
orthogonality checks and ``NORMALIZE_ATOL`` for unit-norm column contracts.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import lstsq as _lstsq

from .errors import ContractError, DegenerateColumnError
from .rng import RngStream

SOLVE_RTOL = 1e-8
NORMALIZE_ATOL = 1e-12


def as_matrix(a, name="matrix") -> np.ndarray:
    """Validate a 2-D float64 array with finite entries."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} contains non-finite entries")
    return a


def least_squares(A, y) -> np.ndarray:
    """Minimum-norm least-squares solution of ``min_x ||y - A x||``.

    Uses a complete orthogonal (QR-with-pivoting) factorization rather than
    normal equations: OMP over over-realized dictionaries routinely selects
    nearly collinear atom sets, where normal equations lose half the digits.
    """
    A = as_matrix(A, "A")
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != A.shape[0]:
        raise ContractError(
            f"shape mismatch: A is {A.shape}, y is {y.shape}"
        )
    x, _, _, _ = _lstsq(A, y, lapack_driver="gelsy")
    return x


def column_norms(B) -> np.ndarray:
    return np.linalg.norm(B, axis=0)


def normalize_columns(B) -> np.ndarray:
    """Rescale every column to unit Euclidean norm.

    A zero column is a hard error: it indicates a training bug (an atom
    collapsed), never a valid state.
    """
    B = as_matrix(B, "B")
    norms = column_norms(B)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms == 0.0)[0])
        raise DegenerateColumnError(f"column {bad} has zero norm")
    return B / norms


def gaussian_matrix(rng: RngStream, d: int, p: int, normalize_cols: bool = True) -> np.ndarray:
    """d x p matrix with i.i.d. standard normal entries, optionally unit-norm columns."""
    if d < 1 or p < 1:
        raise ContractError(f"dimensions must be positive, got ({d}, {p})")
    A = rng.gen.standard_normal((d, p))
    if normalize_cols:
        A = normalize_columns(A)
    return A
