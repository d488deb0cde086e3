from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class RankOneMatrix:
    """Symmetric matrix ``S + u u^T`` with sparse ``S``, never formed densely."""

    def __init__(self, sparse, u):
        self.sparse = sp.csr_matrix(sparse)
        self.u = np.asarray(u, dtype=float).ravel()
        if self.sparse.shape[0] != self.u.size:
            raise ValueError("rank-one factor does not match the sparse part")

    @property
    def shape(self):
        return self.sparse.shape

    @property
    def dtype(self):
        return np.dtype(float)

    def matvec(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            return self.sparse @ x + self.u * (self.u @ x)
        return self.sparse @ x + np.outer(self.u, self.u @ x)

    __matmul__ = matvec

    def diagonal(self):
        return self.sparse.diagonal() + self.u * self.u

    def toarray(self):
        return self.sparse.toarray() + np.outer(self.u, self.u)

    def galerkin(self, P):
        """``P^T (S + u u^T) P`` as another rank-one-updated matrix."""
        Pt = P.T.tocsr()
        coarse = (Pt @ self.sparse @ P).tocsr()
        coarse.sort_indices()
        return RankOneMatrix(coarse, Pt @ self.u)

    def energy(self, x, b):
        """``0.5 x^T (S + u u^T) x - b^T x``."""
        return 0.5 * (x @ (self.sparse @ x) + (self.u @ x) ** 2) - b @ x
