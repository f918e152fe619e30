"""Sparse and dense linear-algebra kernel.

All discrete operators are stored as canonical ``scipy.sparse.csr_matrix``
objects (sorted column indices, no duplicates).  The helpers here add the
shape checks and failure semantics the rest of the package relies on.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

SparseMatrix = sp.csr_matrix

# systems up to this many unknowns are factorized instead of iterated
DIRECT_LIMIT = 1000


class LinalgError(RuntimeError):
    """Raised when a kernel operation cannot deliver its contract."""


class ConvergenceError(LinalgError):
    pass


class SingularMatrixError(LinalgError):
    pass


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix (float64, sorted, summed)."""
    M = sp.csr_matrix(A, dtype=np.float64, copy=True)
    M.sum_duplicates()
    M.sort_indices()
    return M


def check_csr(A: sp.csr_matrix) -> None:
    """Validate the CSR storage invariants, raising ``ValueError``."""
    n_rows, n_cols = A.shape
    ptr, idx = A.indptr, A.indices
    if len(ptr) != n_rows + 1 or ptr[0] != 0 or ptr[-1] != len(A.data):
        raise ValueError("row_offsets inconsistent with stored values")
    if np.any(np.diff(ptr) < 0):
        raise ValueError("row_offsets must be nondecreasing")
    if len(idx) and (idx.min() < 0 or idx.max() >= n_cols):
        raise ValueError("column index out of range")
    for i in range(n_rows):
        row = idx[ptr[i]:ptr[i + 1]]
        if np.any(np.diff(row) <= 0):
            raise ValueError(f"row {i}: column indices not strictly increasing")


def spmv(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"spmv: matrix has {A.shape[1]} columns, vector has {x.shape[0]} entries")
    return A @ x


def add_scaled(A: sp.csr_matrix, B: sp.csr_matrix, c1: float, c2: float) -> sp.csr_matrix:
    """``c1*A + c2*B`` on the union sparsity pattern (cancelled entries kept)."""
    if A.shape != B.shape:
        raise ValueError(f"add_scaled: shapes {A.shape} and {B.shape} differ")
    A = as_csr(A)
    B = as_csr(B)
    # assemble via COO so numerically cancelled entries stay in the pattern
    rows = np.concatenate([np.repeat(np.arange(A.shape[0]), np.diff(A.indptr)),
                           np.repeat(np.arange(B.shape[0]), np.diff(B.indptr))])
    cols = np.concatenate([A.indices, B.indices])
    vals = np.concatenate([c1 * A.data, c2 * B.data])
    C = sp.coo_matrix((vals, (rows, cols)), shape=A.shape).tocsr()
    C.sum_duplicates()
    C.sort_indices()
    return C


def spgemm(A: sp.csr_matrix, B: sp.csr_matrix) -> sp.csr_matrix:
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"spgemm: inner dimensions {A.shape[1]} and {B.shape[0]} differ")
    C = (as_csr(A) @ as_csr(B)).tocsr()
    C.sum_duplicates()
    C.sort_indices()
    return C


def kron(A: sp.csr_matrix, B: sp.csr_matrix) -> sp.csr_matrix:
    return as_csr(sp.kron(A, B, format="csr"))


def transpose(A: sp.csr_matrix) -> sp.csr_matrix:
    return as_csr(A.T)


def identity(n: int) -> sp.csr_matrix:
    return as_csr(sp.identity(n))


def block(blocks) -> sp.csr_matrix:
    """Assemble a block matrix; ``None`` entries are zero blocks."""
    return as_csr(sp.bmat(blocks, format="csr"))


def cg_solve(A: sp.csr_matrix, b: np.ndarray, tol: float = 1e-12, max_it: int = 10_000,
             x0: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """Conjugate gradients for SPD ``A``.

    Returns ``(x, iterations)`` with ``||b - A x|| <= tol * ||b||`` checked on
    the true residual.  Raises :class:`ConvergenceError` after ``max_it``.
    """
    b = np.asarray(b, dtype=np.float64)
    if A.shape[0] != A.shape[1] or A.shape[1] != b.shape[0]:
        raise ValueError("cg_solve: dimension mismatch")
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if bnorm == 0.0:
        return np.zeros_like(b), 0
    r = b - A @ x
    p = r.copy()
    rr = r @ r
    target = tol * bnorm
    for it in range(1, max_it + 1):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0:
            raise LinalgError("cg_solve: matrix is not positive definite")
        step = rr / pAp
        x += step * p
        r -= step * Ap
        rr_new = r @ r
        if np.sqrt(rr_new) <= target:
            # recursive residual drifts; confirm on the true one
            r = b - A @ x
            rr_new = r @ r
            if np.sqrt(rr_new) <= target:
                return x, it
        p = r + (rr_new / rr) * p
        rr = rr_new
    raise ConvergenceError(
        f"cg_solve: relative residual {np.linalg.norm(b - A @ x) / bnorm:.3e} "
        f"above {tol:.1e} after {max_it} iterations")


class Factorization:
    """Reusable sparse LU factorization of a square nonsingular matrix."""

    def __init__(self, A: sp.csr_matrix):
        if A.shape[0] != A.shape[1]:
            raise ValueError("factorization needs a square matrix")
        self.shape = A.shape
        try:
            self._lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:  # "Factor is exactly singular"
            raise SingularMatrixError(str(exc)) from exc
        diag_u = np.abs(self._lu.U.diagonal())
        if diag_u.min() <= 1e-14 * diag_u.max():
            raise SingularMatrixError("matrix is numerically singular")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        if b.shape[0] != self.shape[0]:
            raise ValueError("solve: dimension mismatch")
        return self._lu.solve(b)


def direct_solve(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    return Factorization(A).solve(b)


class SpdSolver:
    """Solve with a fixed SPD matrix to (near) machine accuracy.

    Small systems and, by default, all systems are factorized once; ``cg``
    switches large systems to :func:`cg_solve` at ``tol``.
    """

    def __init__(self, A: sp.csr_matrix, tol: float = 1e-12, method: str = "direct"):
        self.A = A
        self.tol = tol
        self.use_cg = method == "cg" and A.shape[0] > DIRECT_LIMIT
        self._fact = None if self.use_cg else Factorization(A)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.use_cg:
            return cg_solve(self.A, b, self.tol, max_it=50 * self.A.shape[0])[0]
        return self._fact.solve(b)


def eigenvalues(M: np.ndarray) -> np.ndarray:
    """All eigenvalues of a small complex matrix, or a stack of them.

    Uses LAPACK's Hessenberg-QR driver; results are checked for finiteness.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise ValueError("eigenvalues: expected square matrices")
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise LinalgError(f"eigenvalue iteration failed: {exc}") from exc
    if not np.all(np.isfinite(lam)):
        raise LinalgError("eigenvalue iteration produced non-finite values")
    return lam


def spectral_radius(M: np.ndarray) -> np.ndarray:
    return np.abs(eigenvalues(M)).max(axis=-1)


def min_singular_value(M: np.ndarray) -> float:
    return scipy.linalg.svdvals(M).min()
