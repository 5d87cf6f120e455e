"""Sparse Cholesky factorization for symmetric positive-definite precisions.

CHOLMOD picks the fill-reducing ordering, so ``P Q P^T = L L^T``.
"""

import logging

import numpy as np
from scipy import sparse
from sksparse.cholmod import CholmodError, cholesky

from .errors import ConditioningError

logger = logging.getLogger(__name__)

_CHUNK = 512


class SparseFactor:
    """Immutable factorization of a sparse SPD matrix Q."""

    def __init__(self, matrix, **context):
        q = sparse.csc_matrix(matrix, dtype=float)
        n = q.shape[0]
        if q.shape != (n, n):
            raise ConditioningError(f"matrix is not square: {q.shape}", **context)
        if not np.all(np.isfinite(q.data)):
            raise ConditioningError("matrix has non-finite entries", **context)
        try:
            factor = cholesky(q)
        except CholmodError as e:
            raise ConditioningError(f"matrix is not positive definite: {e}", **context) from e
        logdet = float(factor.logdet())
        if not np.isfinite(logdet):
            raise ConditioningError("factorization has a non-finite log-determinant", **context)
        self.n = n
        self._factor = factor
        self.logdet = logdet

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Q^{-1} b for a vector or a matrix of right-hand sides."""
        return np.asarray(self._factor(np.asarray(b, dtype=float)))

    def sample(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals z (n or n x k) to draws from N(0, Q^{-1})."""
        z = np.asarray(z, dtype=float)
        f = self._factor
        return np.asarray(f.apply_Pt(f.solve_Lt(z, use_LDLt_decomposition=False)))

    def quadratic_inverse(self, b) -> np.ndarray:
        """diag(B^T Q^{-1} B) for an n x m matrix B, solved in column chunks."""
        b = sparse.csc_matrix(b) if sparse.issparse(b) else np.asarray(b, dtype=float)
        m = b.shape[1]
        out = np.empty(m)
        for start in range(0, m, _CHUNK):
            block = b[:, start : start + _CHUNK]
            dense = block.toarray() if sparse.issparse(block) else block
            solved = self.solve(dense)
            out[start : start + _CHUNK] = np.einsum("ij,ij->j", dense, solved)
        return out

    def inverse_diagonal(self) -> np.ndarray:
        """diag(Q^{-1})."""
        return self.quadratic_inverse(sparse.identity(self.n, format="csc"))


def factorize(matrix, **context) -> SparseFactor:
    return SparseFactor(matrix, **context)
