"""Active-set truncation of the saddle-point system.

Nodes where the order parameter sits exactly on an obstacle (u = +-1) are
*active*.  Their rows and columns are replaced by unit vectors in the (1,1)
block and annihilated in the coupling block, which leaves the linear system
solved for the Newton direction of the outer iteration.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .exceptions import ConfigurationError, ContractViolation
from .mesh_fem import SaddleSystem
from .sparse.rankone import RankOneMatrix

__all__ = [
    "SingularSchurWarning",
    "TruncationMask",
    "ReducedSystem",
    "ScaledProblem",
    "compute_truncation",
    "truncate_system",
    "scale_variables",
    "rank_one_vector",
    "schur_apply",
    "a_hat_solver",
]


class SingularSchurWarning(RuntimeWarning):
    """The Schur complement is singular because every node is active."""


@dataclass(frozen=True)
class TruncationMask:
    active: np.ndarray

    @property
    def n(self) -> int:
        return self.active.size

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.active))

    @property
    def n_inactive(self) -> int:
        return self.n - self.n_active

    @property
    def t(self) -> np.ndarray:
        """Diagonal of T (1 on inactive nodes)."""
        return (~self.active).astype(float)

    @property
    def t_hat(self) -> np.ndarray:
        """Diagonal of T-hat (1 on active nodes)."""
        return self.active.astype(float)

    @classmethod
    def from_active(cls, active):
        return cls(np.asarray(active, dtype=bool).copy())

    def __eq__(self, other):
        return isinstance(other, TruncationMask) and np.array_equal(self.active, other.active)

    def __hash__(self):
        return hash(self.active.tobytes())


def compute_truncation(u, lower=-1.0, upper=1.0) -> TruncationMask:
    """Active where ``u_j`` equals a bound exactly (no tolerance)."""
    u = np.asarray(u, dtype=float)
    if np.any(u < lower) or np.any(u > upper):
        raise ContractViolation("order parameter outside the admissible box")
    return TruncationMask((u == lower) | (u == upper))


def _mask_sparse(mat, t):
    D = sp.diags(t, format="csr")
    out = (D @ mat @ D).tocsr()
    out.eliminate_zeros()
    return out


@dataclass(frozen=True)
class ReducedSystem:
    """Truncated blocks.

    ``A_hat = T A T + T_hat`` (applied matrix-free), ``B_hat = M T``,
    ``K_hat = T K T + T_hat``, ``m_hat = T m``; ``C`` is not truncated.
    """

    sys: SaddleSystem
    mask: TruncationMask
    K_hat: sp.csr_matrix
    m_hat: np.ndarray
    B_hat: sp.csr_matrix
    A_hat_sparse: sp.csr_matrix

    @property
    def n(self) -> int:
        return self.mask.n

    @property
    def C(self):
        return self.sys.C

    @property
    def eta(self) -> float:
        return self.sys.eta

    @property
    def epsilon(self) -> float:
        return self.sys.epsilon

    @property
    def A_hat(self) -> RankOneMatrix:
        return RankOneMatrix(self.A_hat_sparse, np.sqrt(self.sys.epsilon) * self.m_hat)

    @property
    def Kbar_hat(self) -> RankOneMatrix:
        """``T (K + m m^T) T + T_hat``: the (1,1) block after scaling."""
        return RankOneMatrix(self.K_hat, self.m_hat)

    def apply_A_hat(self, v):
        t = self.mask.t
        return t * (self.sys.A @ (t * v)) + self.mask.t_hat * v

    def scaled_operator(self) -> LinearOperator:
        """``[[Kbar_hat, B_hat^T], [B_hat, -eta K]]`` acting on ``[x; y']``."""
        n = self.n
        Kb = self.Kbar_hat
        Bh = self.B_hat
        BhT = Bh.T.tocsr()
        eK = (self.eta * self.sys.K).tocsr()

        def mv(z):
            z = np.asarray(z).ravel()
            x, y = z[:n], z[n:]
            return np.concatenate([Kb @ x + BhT @ y, Bh @ x - eK @ y])

        return LinearOperator((2 * n, 2 * n), matvec=mv, dtype=float)

    def scaled_dense(self) -> np.ndarray:
        n = self.n
        out = np.empty((2 * n, 2 * n))
        out[:n, :n] = self.Kbar_hat.toarray()
        out[:n, n:] = self.B_hat.T.toarray()
        out[n:, :n] = self.B_hat.toarray()
        out[n:, n:] = -self.eta * self.sys.K.toarray()
        return out

    def A_hat_dense(self) -> np.ndarray:
        t = self.mask.t
        return t[:, None] * self.sys.A.toarray() * t[None, :] + np.diag(self.mask.t_hat)

    def schur_dense(self) -> np.ndarray:
        """``C + B_hat A_hat^{-1} B_hat^T`` formed densely (small problems only)."""
        Bh = self.B_hat.toarray()
        return self.sys.C.toarray() + Bh @ np.linalg.solve(self.A_hat_dense(), Bh.T)


def truncate_system(sys: SaddleSystem, mask: TruncationMask) -> ReducedSystem:
    if mask.n != sys.n:
        raise ContractViolation("mask size does not match the system")
    t = mask.t
    th = sp.diags(mask.t_hat, format="csr")
    K_hat = (_mask_sparse(sys.K, t) + th).tocsr()
    K_hat.sort_indices()
    A_hat_sparse = (_mask_sparse(sys.A.sparse, t) + th).tocsr()
    A_hat_sparse.sort_indices()
    B_hat = (sys.M @ sp.diags(t, format="csr")).tocsr()
    B_hat.eliminate_zeros()
    return ReducedSystem(
        sys=sys, mask=mask, K_hat=K_hat, m_hat=t * sys.m, B_hat=B_hat, A_hat_sparse=A_hat_sparse
    )


@dataclass(frozen=True)
class ScaledProblem:
    """Right-hand side of the scaled reduced system and the map back.

    With ``y = epsilon * y'`` the first block row divides by epsilon and the
    (2,2) block becomes ``-eta K`` with ``eta = tau * epsilon``.
    """

    rhs: np.ndarray
    epsilon: float
    eta: float

    def unscale(self, sol):
        n = sol.size // 2
        return sol[:n].copy(), self.epsilon * sol[n:]

    def scale(self, y):
        return np.asarray(y) / self.epsilon


def scale_variables(sys: SaddleSystem, rhs_w) -> ScaledProblem:
    rhs_w = np.asarray(rhs_w, dtype=float)
    if not sys.epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    return ScaledProblem(
        rhs=np.concatenate([np.zeros(sys.n), rhs_w]), epsilon=sys.epsilon, eta=sys.eta
    )


def rank_one_vector(sys: SaddleSystem, mask: TruncationMask | None = None) -> np.ndarray:
    """``[0, sqrt(eta) m]`` so that ``-eta K = -eta Kbar + m~ m~^T`` in the second block.

    The chemical-potential block is never truncated, hence ``m`` enters
    untruncated; ``mask`` only checks the dimension.
    """
    if not sys.eta > 0:
        raise ConfigurationError("eta must be positive")
    if mask is not None and mask.n != sys.n:
        raise ContractViolation("mask size does not match the system")
    return np.concatenate([np.zeros(sys.n), np.sqrt(sys.eta) * sys.m])


def a_hat_solver(red: ReducedSystem, **inner):
    """Approximate ``A_hat^{-1}`` via Sherman-Morrison over the sparse part."""
    from .precond import make_inner_solver

    return make_inner_solver(red.A_hat, **inner)


def schur_apply(red: ReducedSystem, inner, v):
    """``(C + B_hat A_hat^{-1} B_hat^T) v`` with ``inner`` approximating ``A_hat^{-1}``."""
    if red.mask.n_inactive == 0:
        warnings.warn(
            "all nodes active: B_hat = 0 and the Schur complement reduces to the singular C",
            SingularSchurWarning,
            stacklevel=2,
        )
    v = np.asarray(v, dtype=float)
    w = red.B_hat.T @ v
    if inner is None:
        inner = a_hat_solver(red)
    z = inner @ w if not callable(inner) or hasattr(inner, "shape") else inner(w)
    return red.C @ v + red.B_hat @ z
