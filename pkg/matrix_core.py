"""
Dense symmetric-matrix kernels.

Factorization, inversion and pseudo-inversion of the covariance and
precision matrices, the four matrix norms used in the error analysis, and
the plain-text matrix format used for fixtures and CLI artefacts.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import numpy.typing as npt
import scipy.linalg

from errors import DimensionMismatch, EmptyInput, NotPositiveDefinite, ValidationError

logger = logging.getLogger(__name__)

# Symmetric p x p float64 array, read-only once built by as_symmetric()
SymMatrix = npt.NDArray[np.float64]

EPS = np.finfo(np.float64).eps


# ---------- Construction ----------

def as_symmetric(a: npt.ArrayLike) -> SymMatrix:
    """
    Validate a square matrix and return its symmetric part (A + A^T) / 2.

    The result is a fresh float64 array flagged read-only.
    """
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
    if arr.shape[0] < 1:
        raise EmptyInput("matrix dimension must be at least 1")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix has non-finite entries")
    sym = (arr + arr.T) / 2.0
    sym.flags.writeable = False
    return sym


def identity(p: int) -> SymMatrix:
    return as_symmetric(np.eye(p))


def require_same_dim(a: np.ndarray, b: np.ndarray, what: str = "matrices") -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what} disagree in shape: {a.shape} vs {b.shape}")


# ---------- Factorizations ----------

def cholesky(a: SymMatrix) -> np.ndarray:
    """
    Lower Cholesky factor L with L @ L.T == A.

    A pivot L_ii**2 at or below p * eps * max(diag(A)) counts as a failure,
    which keeps the test scale-invariant.

    Raises:
        NotPositiveDefinite: if A is not (numerically) positive definite
    """
    a = np.asarray(a, dtype=np.float64)
    p = a.shape[0]
    try:
        factor = scipy.linalg.cholesky(a, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise NotPositiveDefinite(f"Cholesky factorization failed: {e}") from e

    max_diag = float(np.max(np.diag(a)))
    threshold = p * EPS * max(max_diag, 0.0)
    pivots = np.diag(factor) ** 2
    bad = np.flatnonzero(pivots <= threshold)
    if bad.size:
        raise NotPositiveDefinite(
            f"pivot {pivots[bad[0]]:.3e} at index {bad[0]} is below tolerance {threshold:.3e}"
        )
    return factor


def is_positive_definite(a: SymMatrix) -> bool:
    try:
        cholesky(a)
    except NotPositiveDefinite:
        return False
    return True


def invert_spd(a: SymMatrix) -> SymMatrix:
    """Inverse of a symmetric positive definite matrix via its Cholesky factor."""
    factor = cholesky(a)
    p = factor.shape[0]
    inv = scipy.linalg.cho_solve((factor, True), np.eye(p))
    return as_symmetric(inv)


def log_det_spd(a: SymMatrix) -> float:
    """log det(A) for positive definite A."""
    factor = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(factor))))


def pseudo_inverse(a: SymMatrix, rtol: float = 1e-10) -> SymMatrix:
    """
    Moore-Penrose pseudo-inverse through the symmetric eigendecomposition.

    Eigenvalues with |lambda| <= rtol * max|lambda| are treated as zero.
    """
    if rtol <= 0:
        raise ValidationError(f"rtol must be positive, got {rtol}")
    a = as_symmetric(a)
    eigvals, eigvecs = np.linalg.eigh(a)
    largest = float(np.max(np.abs(eigvals)))
    if largest == 0.0:
        return as_symmetric(np.zeros_like(a))

    keep = np.abs(eigvals) > rtol * largest
    inv_vals = np.zeros_like(eigvals)
    inv_vals[keep] = 1.0 / eigvals[keep]
    logger.debug("[pinv] rank %d of %d", int(keep.sum()), a.shape[0])
    return as_symmetric((eigvecs * inv_vals) @ eigvecs.T)


# ---------- Norms ----------

@dataclass(frozen=True)
class MatrixNorms:
    frobenius: float
    entrywise_l1: float
    entrywise_max: float
    induced_inf: float


def norms(a: npt.ArrayLike) -> MatrixNorms:
    """Frobenius, entrywise l1, entrywise max and induced infinity norms."""
    arr = np.abs(np.asarray(a, dtype=np.float64))
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a matrix, got shape {arr.shape}")
    return MatrixNorms(
        frobenius=float(np.sqrt(np.sum(arr * arr))),
        entrywise_l1=float(np.sum(arr)),
        entrywise_max=float(np.max(arr)),
        induced_inf=float(np.max(np.sum(arr, axis=1))),
    )


# ---------- Text format ----------

PathLike = Union[str, Path]


def write_matrix_text(path: PathLike, a: npt.ArrayLike) -> None:
    """
    Write a matrix as: first line p, then p whitespace separated rows.

    17 significant digits make the text round-trip exactly.
    """
    arr = np.asarray(a, dtype=np.float64)
    lines = [str(arr.shape[0])]
    for row in arr:
        lines.append(' '.join(f"{v:.17g}" for v in row))
    Path(path).write_text('\n'.join(lines) + '\n')


def read_matrix_text(path: PathLike) -> SymMatrix:
    """Read a matrix written by write_matrix_text()."""
    text = Path(path).read_text().split('\n')
    rows = [line for line in text if line.strip()]
    if not rows:
        raise EmptyInput(f"{path}: empty matrix file")
    try:
        p = int(rows[0].strip())
        values = [[float(v) for v in line.split()] for line in rows[1:]]
    except ValueError as e:
        raise ValidationError(f"{path}: malformed matrix text: {e}") from e
    if len(values) != p or any(len(r) != p for r in values):
        raise DimensionMismatch(f"{path}: header says p={p} but body is not {p}x{p}")
    return as_symmetric(values)
