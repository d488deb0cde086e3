"""Zero-fill incomplete Cholesky factorization."""
from __future__ import annotations

import logging

import numba
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from ..exceptions import NumericalError

log = logging.getLogger(__name__)

__all__ = ["ic_factor", "IncompleteCholesky"]

SHIFTS = (0.0, 1e-3, 1e-2, 1e-1)


@numba.njit(cache=True)
def _ic0(indptr, indices, data, n):
    # in-place on the lower-triangular CSR pattern (sorted, diagonal last)
    vals = data.copy()
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for pk in range(start, end):
            k = indices[pk]
            if k == i:
                s = vals[pk]
                for pj in range(start, pk):
                    s -= vals[pj] * vals[pj]
                if s <= 0.0:
                    return vals, i
                vals[pk] = np.sqrt(s)
            else:
                s = vals[pk]
                # common columns < k of rows i and k
                a, b = start, indptr[k]
                bend = indptr[k + 1]
                while a < pk and b < bend:
                    ca, cb = indices[a], indices[b]
                    if cb >= k:
                        break
                    if ca == cb:
                        s -= vals[a] * vals[b]
                        a += 1
                        b += 1
                    elif ca < cb:
                        a += 1
                    else:
                        b += 1
                vals[pk] = s / vals[indptr[k + 1] - 1]
    return vals, -1


@numba.njit(cache=True)
def _llt_solve(indptr, indices, vals, r):
    n = r.size
    y = r.copy()
    for i in range(n):
        s = y[i]
        end = indptr[i + 1] - 1
        for p in range(indptr[i], end):
            s -= vals[p] * y[indices[p]]
        y[i] = s / vals[end]
    for i in range(n - 1, -1, -1):
        end = indptr[i + 1] - 1
        y[i] = y[i] / vals[end]
        xi = y[i]
        for p in range(indptr[i], end):
            y[indices[p]] -= vals[p] * xi
    return y


class IncompleteCholesky(LinearOperator):
    """Applies ``(L L^T)^{-1}`` for the IC(0) factor ``L`` of a symmetric matrix."""

    def __init__(self, A):
        A = sp.csr_matrix(A, dtype=float)
        n = A.shape[0]
        diag = A.diagonal()
        if np.any(diag <= 0.0):
            raise NumericalError("incomplete Cholesky needs a positive diagonal")
        lower = sp.tril(A, format="csr")
        lower.sort_indices()
        self.shift = None
        for alpha in SHIFTS:
            trial = lower + alpha * sp.diags(diag, format="csr") if alpha else lower
            trial = sp.csr_matrix(trial)
            trial.sort_indices()
            vals, bad = _ic0(trial.indptr, trial.indices, trial.data, n)
            if bad < 0:
                self.shift = alpha
                break
            log.debug("IC(0) pivot breakdown at row %d with shift %g", bad, alpha)
        if self.shift is None:
            raise NumericalError("IC(0) failed after the full diagonal-shift schedule")
        self.indptr = trial.indptr
        self.indices = trial.indices
        self.vals = vals
        super().__init__(dtype=float, shape=A.shape)

    @property
    def L(self):
        return sp.csr_matrix((self.vals, self.indices, self.indptr), shape=self.shape)

    def _matvec(self, x):
        return _llt_solve(self.indptr, self.indices, self.vals, np.ascontiguousarray(x, dtype=float).ravel())


def ic_factor(A) -> IncompleteCholesky:
    return IncompleteCholesky(A)
