"""Sherman-Morrison solves with a sparse base plus a rank-one term."""
from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator

from ..exceptions import NumericalError
from .krylov import as_apply

__all__ = ["smw_solve", "ShermanMorrisonSolver"]


class ShermanMorrisonSolver(LinearOperator):
    """Approximates ``(S + u u^T)^{-1}`` given an approximate ``S^{-1}``.

    ``S^{-1} u`` is computed once at construction.
    """

    def __init__(self, base_solve, u):
        self.base = as_apply(base_solve)
        self.u = np.asarray(u, dtype=float).ravel()
        n = self.u.size
        if np.any(self.u):
            self.su = np.asarray(self.base(self.u)).ravel()
            self.denom = 1.0 + self.u @ self.su
            if not self.denom > 0.0:
                raise NumericalError(
                    f"1 + u^T S^-1 u = {self.denom:.3e} <= 0: base operator is not SPD"
                )
        else:
            self.su = np.zeros(n)
            self.denom = 1.0
        super().__init__(dtype=float, shape=(n, n))

    def _matvec(self, rhs):
        rhs = np.asarray(rhs, dtype=float).ravel()
        y = np.asarray(self.base(rhs)).ravel()
        if self.denom == 1.0 and not np.any(self.su):
            return y
        return y - self.su * ((self.u @ y) / self.denom)


def smw_solve(base_solve, u, rhs):
    return ShermanMorrisonSolver(base_solve, u) @ np.asarray(rhs, dtype=float)
