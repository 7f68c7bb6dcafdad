"""Small dense linear-algebra kernel shared by the estimators.

Everything here works on symmetric matrices of modest size (p x p or T x T).
Eigenvectors follow one sign convention so that weight matrices built from
them are reproducible across LAPACK builds.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

from .exceptions import SingularMatrixError

EIG_FLOOR = 1e-12
RANK_RTOL = 1e-10


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive.

    Ties (entries equal in magnitude up to rounding) resolve to the first
    such row.
    """
    v = np.array(vectors, dtype=np.float64, copy=True)
    if v.size == 0:
        return v
    mag = np.abs(v)
    peak = mag.max(axis=0, keepdims=True)
    first = np.argmax(mag >= peak * (1.0 - 1e-12), axis=0)
    signs = np.sign(v[first, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def sym_eigh(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigendecomposition of a symmetric matrix with canonical signs."""
    a = np.asarray(a, dtype=np.float64)
    sym = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(sym)
    return w, canonical_signs(v)


def inv_sqrtm(a: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric inverse square root ``A^{-1/2}`` of a positive definite matrix.

    Eigenvalues below ``floor * lambda_max`` mean the matrix is numerically
    singular and raise :class:`SingularMatrixError`.
    """
    w, v = sym_eigh(a)
    lam_max = w[-1] if w.size else 0.0
    if lam_max <= 0 or w[0] <= floor * lam_max:
        raise SingularMatrixError(
            f"matrix is not positive definite (eigenvalues {w[0]:.3g} .. {lam_max:.3g})"
        )
    return (v / np.sqrt(w)) @ v.T


def sqrtm_psd(a: np.ndarray) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    w, v = sym_eigh(a)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def pinv_sym(a: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric PSD matrix, dropping null eigenpairs."""
    w, v = sym_eigh(a)
    lam_max = max(w[-1], 0.0) if w.size else 0.0
    keep = w > floor * lam_max
    if not keep.any():
        return np.zeros_like(v)
    vk = v[:, keep]
    return (vk / w[keep]) @ vk.T


def numerical_rank(a: np.ndarray, rtol: float = RANK_RTOL) -> int:
    s = np.linalg.svd(np.asarray(a, dtype=np.float64), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > rtol * s[0]))


def spd_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a x = b`` for symmetric PSD ``a``.

    Tries a Cholesky factorization first and falls back to a column-pivoted
    QR when Cholesky breaks down. A rank-deficient ``a`` raises
    :class:`SingularMatrixError` either way.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if numerical_rank(a) < a.shape[0]:
        raise SingularMatrixError("normal equations are singular")
    try:
        factor = sla.cho_factor(a, lower=False, check_finite=True)
        return sla.cho_solve(factor, b)
    except np.linalg.LinAlgError:
        pass
    q, r, perm = sla.qr(a, pivoting=True)
    z = sla.solve_triangular(r, q.T @ b)
    x = np.empty_like(z)
    x[perm] = z
    return x
