"""Small dense symmetric linear algebra.

Single-site blocks are at most a few dozen coordinates, so everything here is
a thin, checked layer over LAPACK via numpy.  Explicit inverses are never
formed; callers solve.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

from .errors import NoConvergence, NotPositiveDefinite, SingularMatrix

__all__ = [
    "as_symmetric",
    "eig_sym",
    "repair_psd",
    "default_floor",
    "solve",
    "cholesky",
    "cho_solve",
]

_EPS = np.finfo(float).eps


def as_symmetric(M) -> np.ndarray:
    """Return ``M`` as a float matrix with exactly symmetric entries."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if M.shape == (1, 1) or (M == M.T).all():
        return M
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.max(np.abs(M - M.T)) > 1e-8 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (M + M.T)


def eig_sym(M) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""
    M = as_symmetric(M)
    if not np.all(np.isfinite(M)):
        raise NoConvergence("matrix has non-finite entries")
    try:
        lam, V = np.linalg.eigh(M)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return lam, V


def default_floor(M, rel: float = 1e-8) -> float:
    """Eigenvalue floor scaled to the spectrum: ``rel * max(1, |lambda|_max)``."""
    lam, _ = eig_sym(M)
    return rel * max(1.0, float(np.max(np.abs(lam))))


def repair_psd(M, floor: float) -> np.ndarray:
    """Raise every eigenvalue below ``floor`` up to ``floor``.

    Matrices whose spectrum already clears the floor are returned unchanged
    (the same values, bit for bit).  The comparison allows for the rounding
    noise of a previous reconstruction so that the operation is idempotent.
    """
    if not floor > 0:
        raise ValueError(f"floor must be positive, got {floor}")
    M = as_symmetric(M)
    lam, V = eig_sym(M)
    slack = 64 * _EPS * max(float(np.max(np.abs(lam))), floor)
    if lam[0] >= floor - slack:
        return M
    fixed = np.maximum(lam, floor)
    out = (V * fixed) @ V.T
    return 0.5 * (out + out.T)


def solve(M, b) -> np.ndarray:
    """Solve ``M x = b`` for symmetric nonsingular ``M``.

    Raises:
        SingularMatrix: condition number above 1e12 or non-finite solution.
    """
    M = as_symmetric(M)
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(M)):
        raise SingularMatrix("matrix has non-finite entries")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularMatrix(f"matrix is singular to working precision (cond={cond:.3g})")
    x = np.linalg.solve(M, b)
    if not np.all(np.isfinite(x)):
        raise SingularMatrix("solve produced non-finite values")
    return x


def cholesky(M) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == M``."""
    M = as_symmetric(M)
    if not np.all(np.isfinite(M)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def cho_solve(L, b) -> np.ndarray:
    """Solve ``(L L^T) x = b`` given the lower Cholesky factor."""
    return sla.cho_solve((L, True), b)
