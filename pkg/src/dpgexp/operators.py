"""Real linear operators used as Jacobians and generators.

Four concrete kinds are provided:

* :class:`DenseOperator` -- a plain ``(n, n)`` array.
* :class:`CSROperator` -- a scipy CSR matrix with sorted column indices.
* :class:`DiagonalShiftedOperator` -- ``base + diag(d)``; this is the frozen
  Jacobian of a semilinear system ``A u + f(u)`` with pointwise ``f``.
* :class:`TimeAugmentedOperator` -- the block operator ``[[0, 0], [c, J]]``
  obtained when time is appended to the state of a non-autonomous system.

All operators expose ``dim``, ``matvec``, ``norm1`` (exact or an upper
bound of the induced 1-norm), ``to_dense`` and negation.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "LinearOperator",
    "DenseOperator",
    "CSROperator",
    "DiagonalShiftedOperator",
    "TimeAugmentedOperator",
    "as_operator",
]


class LinearOperator:
    """Base class. Subclasses implement ``matvec``, ``norm1`` and ``to_dense``."""

    kind = "abstract"
    dim: int

    def matvec(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def norm1(self) -> float:
        raise NotImplementedError

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    def __neg__(self) -> "LinearOperator":
        raise NotImplementedError

    def __matmul__(self, v):
        return self.matvec(np.asarray(v, dtype=float))

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise ValueError(f"vector of shape {v.shape} does not match operator dimension {self.dim}")
        return v

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class DenseOperator(LinearOperator):
    kind = "dense"

    def __init__(self, matrix):
        M = np.array(matrix, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError(f"dense operator must be square, got shape {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError("dense operator has non-finite entries")
        self.matrix = M
        self.dim = M.shape[0]

    def matvec(self, v):
        return self.matrix @ self._check(v)

    def norm1(self):
        return float(np.abs(self.matrix).sum(axis=0).max()) if self.dim else 0.0

    def to_dense(self):
        return self.matrix.copy()

    def __neg__(self):
        return DenseOperator(-self.matrix)


class CSROperator(LinearOperator):
    kind = "csr"

    def __init__(self, matrix):
        M = sp.csr_matrix(matrix, dtype=float)
        if M.shape[0] != M.shape[1]:
            raise ValueError(f"sparse operator must be square, got shape {M.shape}")
        M.sort_indices()
        if np.any(np.diff(M.indptr) < 0):
            raise ValueError("CSR row pointers must be monotone")
        if not np.all(np.isfinite(M.data)):
            raise ValueError("sparse operator has non-finite entries")
        self.matrix = M
        self.dim = M.shape[0]

    def matvec(self, v):
        return self.matrix @ self._check(v)

    def norm1(self):
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix).sum(axis=0).max())

    def to_dense(self):
        return self.matrix.toarray()

    def __neg__(self):
        return CSROperator(-self.matrix)


class DiagonalShiftedOperator(LinearOperator):
    """``base + diag(shift)``."""

    kind = "diagonal-shifted"

    def __init__(self, base: LinearOperator, shift):
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (base.dim,):
            raise ValueError("diagonal shift length does not match base operator")
        self.base = base
        self.shift = shift
        self.dim = base.dim

    def matvec(self, v):
        v = self._check(v)
        return self.base.matvec(v) + self.shift * v

    def norm1(self):
        if isinstance(self.base, CSROperator):
            M = self.base.matrix + sp.diags(self.shift)
        elif isinstance(self.base, DenseOperator):
            M = self.base.matrix + np.diag(self.shift)
        else:
            # triangle-inequality bound
            return self.base.norm1() + float(np.abs(self.shift).max(initial=0.0))
        return float(abs(M).sum(axis=0).max()) if self.dim else 0.0

    def to_dense(self):
        return self.base.to_dense() + np.diag(self.shift)

    def __neg__(self):
        return DiagonalShiftedOperator(-self.base, -self.shift)


class TimeAugmentedOperator(LinearOperator):
    """Block operator ``[[0, 0], [c, J]]`` acting on ``[t; u]``.

    The first row is identically zero, so the time component of any vector
    is annihilated by the operator.
    """

    kind = "time-augmented"

    def __init__(self, inner: LinearOperator, time_column):
        c = np.asarray(time_column, dtype=float)
        if c.shape != (inner.dim,):
            raise ValueError("time column length does not match inner operator")
        self.inner = inner
        self.time_column = c
        self.dim = inner.dim + 1

    def matvec(self, v):
        v = self._check(v)
        out = np.empty(self.dim)
        out[0] = 0.0
        out[1:] = self.inner.matvec(v[1:]) + v[0] * self.time_column
        return out

    def norm1(self):
        return max(float(np.abs(self.time_column).sum()), self.inner.norm1())

    def to_dense(self):
        M = np.zeros((self.dim, self.dim))
        M[1:, 0] = self.time_column
        M[1:, 1:] = self.inner.to_dense()
        return M

    def __neg__(self):
        return TimeAugmentedOperator(-self.inner, -self.time_column)


def as_operator(obj) -> LinearOperator:
    """Wrap arrays and scipy sparse matrices; pass operators through."""
    if isinstance(obj, LinearOperator):
        return obj
    if sp.issparse(obj):
        return CSROperator(obj)
    return DenseOperator(np.atleast_2d(np.asarray(obj, dtype=float)))
