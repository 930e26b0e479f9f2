"""Small dense fp64 linear algebra.

Vectors and matrices are plain 1-D / 2-D ``numpy.float64`` arrays. The
factorizations are written out by hand because the matrices involved are
tiny (at most a few dozen rows) and the singularity threshold is part of
the contract.
"""

from __future__ import annotations

import numpy as np

Vector = np.ndarray
Matrix = np.ndarray

SINGULAR_PIVOT = 1e-12
SYMMETRY_TOL = 1e-12


class DimensionError(ValueError):
    """Operand shapes do not agree."""


class SingularMatrixError(ArithmeticError):
    """A pivot fell below the singularity threshold during LU."""


def as_vector(data, dim: int | None = None) -> Vector:
    v = np.atleast_1d(np.array(data, dtype=np.float64))
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-D vector, got shape {v.shape}")
    if dim is not None and v.size != dim:
        raise DimensionError(f"expected dim {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector has non-finite entries")
    return v


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> Matrix:
    m = np.array(data, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if (rows is not None and m.shape[0] != rows) or (cols is not None and m.shape[1] != cols):
        raise DimensionError(f"expected {rows}x{cols}, got {m.shape[0]}x{m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def identity(n: int) -> Matrix:
    return np.eye(n, dtype=np.float64)


def zeros(rows: int, cols: int) -> Matrix:
    return np.zeros((rows, cols), dtype=np.float64)


def matvec(m: Matrix, v: Vector) -> Vector:
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise DimensionError(f"cannot multiply {m.shape} by {v.shape}")
    return m @ v


def _require_square(m: Matrix) -> int:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    return m.shape[0]


def lu_factor(m: Matrix) -> tuple[Matrix, np.ndarray, int]:
    """LU decomposition with partial pivoting.

    Returns ``(lu, perm, sign)`` where ``lu`` packs the unit-lower factor
    below the diagonal and the upper factor on and above it, ``perm`` is the
    row permutation (``m[perm] == L @ U``) and ``sign`` the permutation
    parity. Raises SingularMatrixError when a pivot's magnitude is below
    ``SINGULAR_PIVOT``.
    """
    n = _require_square(m)
    lu = np.array(m, dtype=np.float64, copy=True)
    perm = np.arange(n)
    sign = 1
    for j in range(n):
        p = j + int(np.argmax(np.abs(lu[j:, j])))
        if abs(lu[p, j]) < SINGULAR_PIVOT:
            raise SingularMatrixError(f"pivot {lu[p, j]:.3e} in column {j} is below {SINGULAR_PIVOT}")
        if p != j:
            lu[[j, p]] = lu[[p, j]]
            perm[[j, p]] = perm[[p, j]]
            sign = -sign
        lu[j + 1:, j] /= lu[j, j]
        lu[j + 1:, j + 1:] -= np.outer(lu[j + 1:, j], lu[j, j + 1:])
    return lu, perm, sign


def lu_solve(lu: Matrix, perm: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``m @ x = rhs`` given ``lu_factor(m)``; ``rhs`` may be 1-D or 2-D."""
    n = lu.shape[0]
    x = np.array(rhs, dtype=np.float64)[perm]
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def lu_inverse(m: Matrix) -> Matrix:
    lu, perm, _ = lu_factor(m)
    return lu_solve(lu, perm, identity(lu.shape[0]))


def determinant(m: Matrix) -> float:
    """Signed product of the LU pivots; 0.0 for (numerically) singular input."""
    try:
        lu, _, sign = lu_factor(m)
    except SingularMatrixError:
        return 0.0
    return float(sign * np.prod(np.diag(lu)))


def cholesky_check(m: Matrix, floor: float) -> bool:
    """True iff ``m - floor*I`` admits a Cholesky factorization.

    Equivalently, every eigenvalue of the symmetric matrix ``m`` is at least
    ``floor``. A relative slack of a few ulps of ``max|m_ii|`` absorbs the
    roundoff of the factorization itself, so a matrix whose smallest
    eigenvalue equals ``floor`` exactly is accepted.
    """
    n = _require_square(m)
    scale = max(1.0, float(np.max(np.abs(m))))
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * scale:
        raise ValueError("cholesky_check requires a symmetric matrix")
    slack = 16 * n * np.finfo(np.float64).eps * scale
    a = np.array(m, dtype=np.float64) - (floor - slack) * identity(n)
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > 0.0:
            return False
        low[j, j] = np.sqrt(pivot)
        low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return True
