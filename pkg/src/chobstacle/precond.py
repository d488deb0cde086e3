"""Preconditioners for the scaled truncated saddle-point system

    [[Kbar_hat, B_hat^T], [B_hat, -eta K]].

``PrecondI`` is block diagonal with blocks ``Kbar + eta^{-1/2} M`` and
``eta Kbar + eta^{1/2} M``.  ``PrecondII`` is block lower triangular with the
factored Schur approximation ``(M + sqrt(eta) Kbar) Kbar^{-1} (M + sqrt(eta) Kbar)``.
Every elliptic solve goes through :func:`make_inner_solver`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, splu

from .exceptions import ConfigurationError
from .mesh_fem import lumped_mass
from .saddle_reduce import ReducedSystem
from .sparse.amg import AggregationAMG
from .sparse.ichol import IncompleteCholesky
from .sparse.krylov import pcg
from .sparse.rankone import RankOneMatrix
from .sparse.smw import ShermanMorrisonSolver

log = logging.getLogger(__name__)

__all__ = [
    "InnerConfig",
    "InnerSolver",
    "make_inner_solver",
    "PrecondI",
    "PrecondII",
    "prec1_build",
    "prec1_apply",
    "prec2_build",
    "prec2_apply",
    "prec1_spectrum",
    "spectrum_check_prec2",
]


@dataclass(frozen=True)
class InnerConfig:
    """Inner elliptic solver: ``method`` in {'amg', 'ic', 'direct'}.

    ``rtol=None`` picks 1e-10 up to 5000 unknowns and 1e-6 above.
    """

    method: str = "amg"
    rtol: float | None = None
    maxiter: int = 500

    def __post_init__(self):
        if self.method not in ("amg", "ic", "direct"):
            raise ConfigurationError(f"unknown inner solver {self.method!r}")

    def tolerance(self, n):
        if self.rtol is not None:
            return self.rtol
        return 1e-10 if n <= 5000 else 1e-6


class InnerSolver(LinearOperator):
    """Approximate inverse of an SPD matrix ``S + u u^T`` with sparse ``S``.

    ``S`` is symmetrically scaled by its diagonal before the AMG/IC setup.  If
    ``S`` is singular (``singular=True``), PCG runs on the full operator with a
    preconditioner for a slightly shifted ``S`` instead of Sherman-Morrison.
    Counters record inner iterations and non-converged solves.
    """

    def __init__(self, mat: RankOneMatrix, cfg: InnerConfig = InnerConfig(), singular=False):
        self.mat = mat
        self.cfg = cfg
        self.singular = singular
        self.calls = 0
        self.iterations = 0
        self.failures = 0
        S = mat.sparse
        n = S.shape[0]
        self.rtol = cfg.tolerance(n)
        d = S.diagonal()
        if singular:
            S = (S + 1e-8 * sp.diags(d)).tocsr()
        self.dhalf = 1.0 / np.sqrt(d)
        Dh = sp.diags(self.dhalf, format="csr")
        Ss = (Dh @ S @ Dh).tocsr()
        Ss.sort_indices()
        self.scaled = Ss
        if cfg.method == "direct":
            lu = splu(sp.csc_matrix(Ss))
            self._prec = lu.solve
            self._exact = not singular
        else:
            self._prec = AggregationAMG(Ss) if cfg.method == "amg" else IncompleteCholesky(Ss)
            self._exact = False
        if singular:
            self._full_scaled = RankOneMatrix((Dh @ mat.sparse @ Dh).tocsr(), self.dhalf * mat.u)
            self._smw = None
        else:
            self._smw = ShermanMorrisonSolver(self._base, self.dhalf * mat.u)
        super().__init__(dtype=float, shape=(n, n))

    def _base(self, b):
        if self._exact:
            return self._prec(b)
        x, st = pcg(self.scaled, b, self._prec, rtol=self.rtol, maxiter=self.cfg.maxiter)
        self._record(st)
        return x

    def _record(self, st):
        self.calls += 1
        self.iterations += st.iterations
        if not st.converged:
            self.failures += 1
            log.debug("inner solve stopped at relres %.2e", st.final_relres)

    def _matvec(self, b):
        b = np.asarray(b, dtype=float).ravel()
        bs = self.dhalf * b
        if self._smw is not None:
            z = self._smw @ bs
        else:
            prec = self._prec
            rtol = 1e-14 if self.cfg.method == "direct" else self.rtol
            z, st = pcg(self._full_scaled, bs, prec, rtol=rtol, maxiter=self.cfg.maxiter)
            self._record(st)
        return self.dhalf * z


def make_inner_solver(mat, cfg: InnerConfig | None = None, singular=False, **kw) -> InnerSolver:
    if cfg is None:
        cfg = InnerConfig(**kw)
    if not isinstance(mat, RankOneMatrix):
        mat = RankOneMatrix(mat, np.zeros(mat.shape[0]))
    return InnerSolver(mat, cfg, singular=singular)


def _check_eta(eta):
    if not (np.isfinite(eta) and eta > 0):
        raise ConfigurationError(f"eta must be positive, got {eta!r}")


def _check_schur_mass(mode):
    if mode not in ("full", "inactive"):
        raise ConfigurationError(f"schur_mass must be 'full' or 'inactive', got {mode!r}")


def _mass(red: ReducedSystem, lump: bool):
    return lumped_mass(red.sys.M) if lump else red.sys.M


def _masked(mat, t, t_hat):
    D = sp.diags(t, format="csr")
    out = (D @ mat @ D + sp.diags(t_hat, format="csr")).tocsr()
    out.eliminate_zeros()
    out.sort_indices()
    return out


class PrecondI(LinearOperator):
    """Block-diagonal preconditioner.

    ``block_V = T (Kbar + eta^{-1/2} M) T + T_hat`` and
    ``block_Q = eta Kbar + eta^{1/2} M``.  With ``truncate_q=True`` the second
    block is truncated like the first.
    """

    def __init__(
        self, red: ReducedSystem, inner: InnerConfig = InnerConfig(), lump_mass=False, truncate_q=False,
        schur_mass="inactive",
    ):
        _check_schur_mass(schur_mass)
        eta = red.eta
        _check_eta(eta)
        self.red = red
        self.sqrt_eta = np.sqrt(eta)
        self.inv_sqrt_eta = 1.0 / self.sqrt_eta
        K, M, m = red.sys.K, _mass(red, lump_mass), red.sys.m
        t, th = red.mask.t, red.mask.t_hat
        self.block_V = RankOneMatrix(_masked(K + self.inv_sqrt_eta * M, t, th), t * m)
        q_mass = _masked(M, t, 0.0 * th) if schur_mass == "inactive" else M
        q_sparse = (eta * K + self.sqrt_eta * q_mass).tocsr()
        if truncate_q:
            self.block_Q = RankOneMatrix(_masked(q_sparse, t, th), self.sqrt_eta * t * m)
        else:
            self.block_Q = RankOneMatrix(q_sparse, self.sqrt_eta * m)
        self.solve_V = make_inner_solver(self.block_V, inner)
        self.solve_Q = make_inner_solver(self.block_Q, inner)
        n = red.n
        super().__init__(dtype=float, shape=(2 * n, 2 * n))

    @property
    def inner_failures(self):
        return self.solve_V.failures + self.solve_Q.failures

    def _matvec(self, r):
        r = np.asarray(r, dtype=float).ravel()
        n = self.red.n
        if not np.any(r):
            return np.zeros_like(r)
        return np.concatenate([self.solve_V @ r[:n], self.solve_Q @ r[n:]])

    def dense(self) -> np.ndarray:
        n = self.red.n
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.block_V.toarray()
        out[n:, n:] = self.block_Q.toarray()
        return out


class PrecondII(LinearOperator):
    """Block lower-triangular preconditioner ``[[Kbar_hat, 0], [B_hat, -S~]]``.

    ``S~^{-1} = G^{-1} Kbar G^{-1}`` with ``G = M + sqrt(eta) Kbar``, so one
    application costs three elliptic solves and one sparse product.  A custom
    Schur inverse can be passed as ``schur_inverse`` (used to check the
    exact-Schur limit).
    """

    def __init__(
        self, red: ReducedSystem, inner: InnerConfig = InnerConfig(), lump_mass=False, schur_inverse=None,
        schur_mass="inactive",
    ):
        _check_schur_mass(schur_mass)
        eta = red.eta
        _check_eta(eta)
        self.red = red
        self.sqrt_eta = np.sqrt(eta)
        K, M, m = red.sys.K, _mass(red, lump_mass), red.sys.m
        self.Kbar = RankOneMatrix(K, m)
        g_mass = _masked(M, red.mask.t, 0.0 * red.mask.t_hat) if schur_mass == "inactive" else M
        self.G = RankOneMatrix((g_mass + self.sqrt_eta * K).tocsr(), eta**0.25 * m)
        self.solve_K11 = make_inner_solver(red.Kbar_hat, inner, singular=red.mask.n_active == 0)
        self.solve_G = make_inner_solver(self.G, inner)
        self.schur_inverse = schur_inverse
        n = red.n
        super().__init__(dtype=float, shape=(2 * n, 2 * n))

    @property
    def inner_failures(self):
        return self.solve_K11.failures + self.solve_G.failures

    def apply_schur_inverse(self, v):
        if self.schur_inverse is not None:
            return self.schur_inverse(v)
        return self.solve_G @ (self.Kbar @ (self.solve_G @ v))

    def _matvec(self, r):
        r = np.asarray(r, dtype=float).ravel()
        n = self.red.n
        if not np.any(r):
            return np.zeros_like(r)
        x1 = self.solve_K11 @ r[:n]
        x2 = self.apply_schur_inverse(self.red.B_hat @ x1 - r[n:])
        return np.concatenate([x1, x2])

    def schur_approx_dense(self) -> np.ndarray:
        G = self.G.toarray()
        return G @ np.linalg.solve(self.Kbar.toarray(), G)

    def dense(self) -> np.ndarray:
        n = self.red.n
        out = np.zeros((2 * n, 2 * n))
        out[:n, :n] = self.red.Kbar_hat.toarray()
        out[n:, :n] = self.red.B_hat.toarray()
        out[n:, n:] = -self.schur_approx_dense()
        return out


def prec1_build(red: ReducedSystem, inner: InnerConfig | None = None, **kw) -> PrecondI:
    return PrecondI(red, inner or InnerConfig(), **kw)


def prec1_apply(P: PrecondI, r):
    return P @ np.asarray(r, dtype=float)


def prec2_build(red: ReducedSystem, inner: InnerConfig | None = None, **kw) -> PrecondII:
    return PrecondII(red, inner or InnerConfig(), **kw)


def prec2_apply(P: PrecondII, red: ReducedSystem, r):
    if P.red is not red:
        raise ConfigurationError("preconditioner was built for a different reduced system")
    return P @ np.asarray(r, dtype=float)


def prec1_spectrum(red: ReducedSystem, untruncated_lemma_form=True, lump_mass=False, schur_mass="inactive") -> dict:
    """Dense spectrum of ``P_I^{-1} A`` with exact block solves.

    ``P_I`` is SPD, so the spectrum is computed from the symmetric matrix
    ``L^{-1} A L^{-T}`` (``P_I = L L^T``) and ``cond = max|eig| / min|eig|``.
    With ``untruncated_lemma_form`` the pair is ``[[Kbar, M], [M, -eta Kbar]]``
    and ``diag(Kbar + eta^{-1/2} M, eta Kbar + eta^{1/2} M)``; otherwise the
    scaled truncated operator with the preconditioner built for ``red``.
    """
    if untruncated_lemma_form:
        n = red.n
        Kb = RankOneMatrix(red.sys.K, red.sys.m).toarray()
        M = (lumped_mass(red.sys.M) if lump_mass else red.sys.M).toarray()
        A = np.block([[Kb, M], [M, -red.eta * Kb]])
        P = np.zeros_like(A)
        P[:n, :n] = Kb + M / np.sqrt(red.eta)
        P[n:, n:] = red.eta * Kb + np.sqrt(red.eta) * M
    else:
        A = red.scaled_dense()
        P = PrecondI(red, InnerConfig("direct"), lump_mass=lump_mass, schur_mass=schur_mass).dense()
    L = np.linalg.cholesky(P)
    half = sla.solve_triangular(L, A, lower=True)
    op = sla.solve_triangular(L, half.T, lower=True)
    eig = np.linalg.eigvalsh(0.5 * (op + op.T))
    absval = np.abs(eig)
    return {
        "eigenvalues": eig,
        "radius": float(absval.max()),
        "min_abs_eig": float(absval.min()),
        "cond": float(absval.max() / absval.min()),
    }


def spectrum_check_prec2(red: ReducedSystem, tol=1e-8, schur_exact=False) -> dict:
    """Dense eigenvalues of ``P_II^{-1} A`` with exact block solves.

    Counts eigenvalues within ``tol`` of one; at least ``k`` (the number of
    untruncated nodes) are expected.
    """
    n = red.n
    A = red.scaled_dense()
    K11 = red.Kbar_hat.toarray()
    Bh = red.B_hat.toarray()
    if schur_exact:
        S = red.eta * red.sys.K.toarray() + Bh @ np.linalg.solve(K11, Bh.T)
    else:
        S = PrecondII(red, InnerConfig("direct")).schur_approx_dense()
    P = np.zeros_like(A)
    P[:n, :n] = K11
    P[n:, :n] = Bh
    P[n:, n:] = -S
    op = np.linalg.solve(P, A)
    eig = np.linalg.eigvals(op)
    near_one = int(np.count_nonzero(np.abs(eig - 1.0) <= tol))
    # spectrum of the preconditioned Schur complement S~^{-1} S
    S_true = red.eta * red.sys.K.toarray() + Bh @ np.linalg.solve(K11, Bh.T)
    schur_eig = np.linalg.eigvals(np.linalg.solve(S, S_true))
    return {
        "eigenvalues": eig,
        "near_one": near_one,
        "k": red.mask.n_inactive,
        "ok": near_one >= red.mask.n_inactive,
        "schur_eigenvalues": schur_eig,
        "schur_range": (float(np.min(schur_eig.real)), float(np.max(schur_eig.real))),
    }
