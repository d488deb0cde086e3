"""Unsmoothed-aggregation algebraic multigrid."""
from __future__ import annotations

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, splu

__all__ = ["standard_aggregation", "aggregation_prolongation", "AggregationAMG", "amg_hierarchy"]


def strength_graph(A, theta=0.1):
    """Symmetric strength of connection ``|a_ij| >= theta*sqrt(|a_ii a_jj|)``, no diagonal."""
    A = sp.csr_matrix(A)
    coo = A.tocoo()
    d = np.sqrt(np.abs(A.diagonal()))
    keep = (coo.row != coo.col) & (np.abs(coo.data) >= theta * d[coo.row] * d[coo.col]) & (coo.data != 0)
    S = sp.csr_matrix(
        (np.ones(int(keep.sum())), (coo.row[keep], coo.col[keep])), shape=A.shape
    )
    S.sort_indices()
    return S


@numba.njit(cache=True)
def _aggregate(indptr, indices, n):
    agg = -np.ones(n, dtype=np.int64)
    count = 0
    # pass 1: root nodes whose whole neighbourhood is free
    for i in range(n):
        if agg[i] >= 0 or indptr[i + 1] == indptr[i]:
            continue
        free = True
        for p in range(indptr[i], indptr[i + 1]):
            if agg[indices[p]] >= 0:
                free = False
                break
        if free:
            agg[i] = count
            for p in range(indptr[i], indptr[i + 1]):
                agg[indices[p]] = count
            count += 1
    # pass 2: attach leftovers to a neighbouring aggregate
    tmp = agg.copy()
    for i in range(n):
        if agg[i] >= 0:
            continue
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if tmp[j] >= 0:
                agg[i] = tmp[j]
                break
    # pass 3: whatever is still free forms new aggregates with free neighbours
    for i in range(n):
        if agg[i] >= 0 or indptr[i + 1] == indptr[i]:
            continue
        agg[i] = count
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if agg[j] < 0:
                agg[j] = count
        count += 1
    return agg, count


def standard_aggregation(A, theta=0.1):
    """Aggregate index per node (``-1`` for isolated nodes) and aggregate count."""
    S = strength_graph(A, theta)
    agg, count = _aggregate(S.indptr, S.indices, S.shape[0])
    return agg, int(count)


def aggregation_prolongation(A, theta=0.1) -> sp.csr_matrix:
    """Piecewise-constant prolongation with 0/1 entries, one per aggregated row."""
    agg, count = standard_aggregation(A, theta)
    n = agg.size
    rows = np.flatnonzero(agg >= 0)
    P = sp.csr_matrix((np.ones(rows.size), (rows, agg[rows])), shape=(n, count))
    P.sort_indices()
    return P


class _Coarsest:
    def __init__(self, A):
        n = A.shape[0]
        if n <= 400:
            dense = A.toarray()
            try:
                self._cho = sla.cho_factor(dense)
                self._solve = lambda b: sla.cho_solve(self._cho, b)
            except sla.LinAlgError:
                pinv = np.linalg.pinv(dense)
                self._solve = lambda b: pinv @ b
        else:
            lu = splu(sp.csc_matrix(A))
            self._solve = lu.solve

    def __call__(self, b):
        return self._solve(b)


class AggregationAMG(LinearOperator):
    """Symmetric V-cycle with damped-Jacobi smoothing and Galerkin coarse operators."""

    def __init__(self, A, max_levels=10, min_coarse=50, theta=0.1, omega=2.0 / 3.0, sweeps=2):
        A = sp.csr_matrix(A, dtype=float)
        self.omega = omega
        self.sweeps = sweeps
        self.levels = []
        current = A
        while True:
            level = {"A": current, "dinv": 1.0 / current.diagonal(), "P": None}
            self.levels.append(level)
            n = current.shape[0]
            if len(self.levels) >= max_levels or n <= min_coarse:
                break
            P = aggregation_prolongation(current, theta)
            if P.shape[1] == 0 or P.shape[1] > 0.9 * n:
                break
            level["P"] = P
            level["R"] = P.T.tocsr()
            current = (P.T @ current @ P).tocsr()
        self.coarse = _Coarsest(self.levels[-1]["A"]) if len(self.levels) > 1 else None
        super().__init__(dtype=float, shape=A.shape)

    @property
    def n_levels(self):
        return len(self.levels)

    def level_sizes(self):
        return [lvl["A"].shape[0] for lvl in self.levels]

    def _smooth(self, lvl, x, b):
        A, dinv = lvl["A"], lvl["dinv"]
        for _ in range(self.sweeps):
            x = x + self.omega * dinv * (b - A @ x)
        return x

    def _cycle(self, k, b):
        lvl = self.levels[k]
        if k == len(self.levels) - 1:
            if self.coarse is None:
                return self._smooth(lvl, np.zeros_like(b), b)
            return self.coarse(b)
        x = self._smooth(lvl, np.zeros_like(b), b)
        P = lvl["P"]
        r = b - lvl["A"] @ x
        x = x + P @ self._cycle(k + 1, lvl["R"] @ r)
        x = self._smooth(lvl, x, b)
        return x

    def _matvec(self, b):
        return self._cycle(0, np.asarray(b, dtype=float).ravel())


def amg_hierarchy(A, max_levels=10, min_coarse=50, **kw) -> AggregationAMG:
    return AggregationAMG(A, max_levels=max_levels, min_coarse=min_coarse, **kw)
