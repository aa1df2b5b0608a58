"""Dense Cholesky, symmetric sparse storage and unpreconditioned CG."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.linalg import solve_triangular

__all__ = [
    "NotSPDError",
    "MaxIterationsError",
    "NumericalBreakdownError",
    "DenseCholesky",
    "SparseSymmetric",
    "cholesky",
    "solve_cholesky",
    "cg_solve",
]


class NotSPDError(Exception):
    """Matrix is not symmetric positive definite.

    Attributes
    ----------
    pivot : int
        Index of the first nonpositive pivot.
    """

    def __init__(self, pivot):
        super().__init__(f"matrix is not SPD (nonpositive pivot at index {pivot})")
        self.pivot = pivot


class MaxIterationsError(Exception):
    """CG hit the iteration cap; carries the residual that was reached."""

    def __init__(self, iterations, achieved):
        super().__init__(
            f"CG did not converge in {iterations} iterations "
            f"(relative residual {achieved:.3e})"
        )
        self.iterations = iterations
        self.achieved = achieved


class NumericalBreakdownError(Exception):
    """CG produced a non-finite iterate or curvature."""


@dataclass(frozen=True)
class DenseCholesky:
    """Lower-triangular Cholesky factor of a dense SPD matrix."""

    factor: np.ndarray

    @property
    def dim(self) -> int:
        return self.factor.shape[0]


def cholesky(a: np.ndarray) -> DenseCholesky:
    """Factor a dense SPD matrix as L L^T.

    Raises :class:`NotSPDError` with the offending pivot index when a
    nonpositive pivot appears.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if d <= 0.0 or not np.isfinite(d):
            raise NotSPDError(j)
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return DenseCholesky(L)


def solve_cholesky(f: DenseCholesky, b: np.ndarray) -> np.ndarray:
    """Solve A x = b (vector or multi-column) from the factor of A."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != f.dim:
        raise ValueError("dimension mismatch in solve_cholesky")
    y = solve_triangular(f.factor, b, lower=True)
    return solve_triangular(f.factor.T, y, lower=False)


class SparseSymmetric:
    """Symmetric sparse matrix storing only the upper triangle (CSR).

    The mat-vec combines the upper triangle with its transpose; the
    strictly-lower transpose copy is cached so products stay row-major.
    """

    def __init__(self, upper: sparse.csr_matrix, dim: int):
        self.upper = upper
        self.dim = dim
        self._lower = sparse.triu(upper, k=1).T.tocsr()

    @classmethod
    def from_matrix(cls, a) -> "SparseSymmetric":
        a = sparse.csr_matrix(a)
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        return cls(sparse.triu(a).tocsr(), a.shape[0])

    @property
    def nnz(self) -> int:
        return self.upper.nnz

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.upper @ x + self._lower @ x

    def __matmul__(self, x):
        return self.matvec(x)

    def diagonal(self) -> np.ndarray:
        return self.upper.diagonal()

    def todense(self) -> np.ndarray:
        u = self.upper.toarray()
        return u + np.triu(u, k=1).T


def cg_solve(a, b, rel_tol: float = 1e-10, max_iter: int | None = None):
    """Unpreconditioned conjugate gradients for an SPD operator.

    Iterates until the residual satisfies ``norm(b - A x) <= rel_tol *
    norm(b)`` in both the 2-norm and the max-norm.  The recurrence residual
    is replaced by the true residual whenever the stopping test first
    passes, guarding against drift.  Returns ``(x, iterations)``.

    Raises
    ------
    MaxIterationsError
        After ``max_iter`` iterations (default ``50 * dim``).
    NumericalBreakdownError
        On non-finite values or nonpositive curvature.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if max_iter is None:
        max_iter = 50 * n

    matvec = a.matvec if isinstance(a, SparseSymmetric) else (lambda v: a @ v)
    norm_b2 = np.linalg.norm(b)
    if norm_b2 == 0.0:
        return np.zeros(n), 0
    norm_binf = np.max(np.abs(b))

    x = np.zeros(n)
    r = b.copy()
    p = r.copy()
    rs = r @ r

    def converged(res):
        return (np.sqrt(res @ res) <= rel_tol * norm_b2
                and np.max(np.abs(res)) <= rel_tol * norm_binf)

    if converged(r):
        return x, 0

    for it in range(1, max_iter + 1):
        ap = matvec(p)
        curv = p @ ap
        if not np.isfinite(curv) or curv <= 0.0:
            raise NumericalBreakdownError(
                f"nonpositive or non-finite curvature at iteration {it}"
            )
        alpha = rs / curv
        x += alpha * p
        r -= alpha * ap
        rs_new = r @ r
        if not np.isfinite(rs_new):
            raise NumericalBreakdownError(f"non-finite residual at iteration {it}")
        if converged(r):
            true_r = b - matvec(x)
            if converged(true_r):
                return x, it
            r = true_r
            rs_new = r @ r
            p = r.copy()
            rs = rs_new
            continue
        beta = rs_new / rs
        rs = rs_new
        p = r + beta * p

    achieved = np.linalg.norm(b - matvec(x)) / norm_b2
    raise MaxIterationsError(max_iter, achieved)
