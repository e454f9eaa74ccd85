"""Dense matrix primitives shared by every update rule.

Everything here operates on 2-d float64 arrays and is a pure function:
no global state, no in-place mutation of inputs.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

# Relative threshold below which a singular value marks its problem as
# rank-deficient for the trace maximizers.
DEGENERACY_RTOL = 1e-12


class NumericalError(RuntimeError):
    """A matrix routine failed to converge or produced unusable output."""


class SvdFactors(NamedTuple):
    u: np.ndarray   # orthonormal columns
    s: np.ndarray   # singular values, descending, all >= 0
    vt: np.ndarray  # orthonormal rows


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-d float64 array or raise ValueError."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must be 2-d with positive shape, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def svd(a: np.ndarray) -> SvdFactors:
    """Thin SVD with min(rows, cols) triplets."""
    a = as_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge on a {a.shape} matrix") from exc
    return SvdFactors(u, s, vt)


def pinv(a: np.ndarray, tol: float | None = None) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values <= tol are treated as exact zeros; the default tol is
    max(rows, cols) * machine epsilon * largest singular value.
    """
    u, s, vt = svd(a)
    if tol is None:
        tol = max(a.shape) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
    elif tol < 0:
        raise ValueError("tol must be >= 0")
    inv = np.zeros_like(s)
    keep = s > tol
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def pos_part(a: np.ndarray) -> np.ndarray:
    """Elementwise (|A| + A) / 2."""
    a = np.asarray(a, dtype=np.float64)
    return (np.abs(a) + a) / 2.0


def neg_part(a: np.ndarray) -> np.ndarray:
    """Elementwise (|A| - A) / 2, so that pos_part(a) - neg_part(a) == a."""
    a = np.asarray(a, dtype=np.float64)
    return (np.abs(a) - a) / 2.0


def procrustes_max(u: np.ndarray) -> tuple[np.ndarray, bool]:
    """Row-orthonormal h (k x n) maximizing tr(h @ u) for an n x k input.

    With the thin SVD u = p @ diag(s) @ qt, the maximizer is h = qt.T @ p.T
    and the attained trace equals s.sum().

    Returns (h, degenerate). When u is rank-deficient (including u == 0) the
    maximizer is not unique; h is still a valid orthonormal maximizer but the
    degenerate flag is set so callers can keep their previous iterate instead.
    """
    u = as_matrix(u, "u")
    n, k = u.shape
    if k > n:
        raise ValueError(f"u needs cols <= rows, got shape {u.shape}")
    p, s, qt = svd(u)
    h = qt.T @ p.T
    degenerate = bool(s[-1] <= DEGENERACY_RTOL * s[0])
    return h, degenerate
