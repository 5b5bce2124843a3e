"""Symmetric sparse storage and Jacobi-preconditioned conjugate gradients."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import DivergenceError, MatrixError

RESIDUAL_REFRESH = 50


class SparseSymMatrix:
    """Full-storage CSR matrix whose entries are symmetric by construction.

    Rows keep sorted column indices, so the per-row summation order of
    :meth:`matvec` is fixed and results are bitwise reproducible.
    """

    def __init__(self, csr):
        csr = sp.csr_matrix(csr)
        if csr.shape[0] != csr.shape[1]:
            raise MatrixError(f"matrix must be square, got {csr.shape}")
        csr.sort_indices()
        self.csr = csr

    @classmethod
    def from_parts(cls, n, diag, rows, cols, vals):
        """Assemble from a diagonal plus off-diagonal triplets.

        Each off-diagonal value is stored once in the upper triangle and
        mirrored, which makes ``A[i, j] == A[j, i]`` hold bitwise.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if np.any(rows == cols):
            raise MatrixError("off-diagonal triplets must not touch the diagonal")
        lo = np.minimum(rows, cols)
        hi = np.maximum(rows, cols)
        upper = sp.coo_matrix((np.asarray(vals, dtype=float), (lo, hi)), shape=(n, n)).tocsr()
        upper.sum_duplicates()
        full = upper + upper.T + sp.diags(np.asarray(diag, dtype=float), format="csr")
        return cls(full)

    @classmethod
    def from_dense(cls, dense):
        return cls(sp.csr_matrix(np.asarray(dense, dtype=float)))

    @property
    def n(self) -> int:
        return self.csr.shape[0]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    def diagonal(self):
        return self.csr.diagonal()

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise MatrixError(f"vector of shape {x.shape} does not match matrix of size {self.n}")
        return self.csr @ x

    __matmul__ = matvec

    def to_dense(self):
        return self.csr.toarray()

    def max_asymmetry(self) -> float:
        d = self.csr - self.csr.T
        return float(abs(d).max()) if d.nnz else 0.0

    def write_matrix_market(self, path, comment=""):
        scipy.io.mmwrite(str(path), self.csr.tocoo(), comment=comment, symmetry="symmetric")


def matvec(A, x):
    return A.matvec(x)


@dataclass
class SolveReport:
    iterations: int
    relative_residual: float
    converged: bool
    wall_time: float


def pcg_solve(A: SparseSymMatrix, b, tol: float = 1e-5, max_iter: int | None = None,
              precondition: bool = True, x0=None):
    """Conjugate gradients with a diagonal (Jacobi) preconditioner.

    Stops at the first iterate with ``||b - Ax|| <= tol * ||b||`` (true
    residual, unpreconditioned 2-norm). The recurrence residual is replaced by
    the true residual every 50 iterations.
    """
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=float)
    n = A.n
    if b.shape != (n,):
        raise MatrixError(f"rhs of shape {b.shape} does not match matrix of size {n}")
    if not np.all(np.isfinite(b)):
        raise DivergenceError("non-finite right-hand side")
    if max_iter is None:
        max_iter = 10 * n
    diag = A.diagonal()
    if n and np.min(diag) <= 0:
        raise MatrixError(f"non-positive diagonal entry at row {int(np.argmin(diag))}")
    inv_diag = 1.0 / diag if precondition else np.ones(n)

    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), SolveReport(0, 0.0, True, time.perf_counter() - t0)

    csr = A.csr
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - csr @ x if x0 is not None else b.copy()
    z = r * inv_diag
    p = z.copy()
    rz = float(r @ z)
    target = tol * bnorm
    rnorm = float(np.linalg.norm(r))
    it = 0
    if rnorm <= target:
        return x, SolveReport(0, rnorm / bnorm, True, time.perf_counter() - t0)
    while it < max_iter:
        it += 1
        Ap = csr @ p
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise DivergenceError(f"NaN/Inf encountered at CG iteration {it}")
        if pAp <= 0.0:
            # Breakdown: direction in the null space or loss of definiteness.
            r = b - csr @ x
            rnorm = float(np.linalg.norm(r))
            break
        alpha = rz / pAp
        x += alpha * p
        if it % RESIDUAL_REFRESH == 0:
            r = b - csr @ x
        else:
            r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        if not np.isfinite(rnorm):
            raise DivergenceError(f"NaN/Inf encountered at CG iteration {it}")
        if rnorm <= target:
            r = b - csr @ x
            rnorm = float(np.linalg.norm(r))
            if rnorm <= target:
                break
        z = r * inv_diag
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p = z + beta * p
    rel = rnorm / bnorm
    return x, SolveReport(it, rel, rel <= tol, time.perf_counter() - t0)
