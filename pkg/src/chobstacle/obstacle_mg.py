"""Monotone multigrid for box-constrained quadratic minimization

    min 1/2 v^T A v - b^T v   subject to  lower <= v <= upper,

with ``A = S + u u^T`` (sparse plus rank one).  Smoother and coarse solver are
projected Gauss-Seidel; coarse levels see restricted defect obstacles, so no
V-cycle increases the energy.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.sparse as sp

from .exceptions import ContractViolation
from .sparse.amg import aggregation_prolongation
from .sparse.krylov import SolveStats
from .sparse.rankone import RankOneMatrix

__all__ = [
    "BoxConstraints",
    "ObstacleHierarchy",
    "MonotoneMultigrid",
    "build_hierarchy",
    "pgs_sweep",
    "restrict_obstacles",
    "mmg_vcycle",
    "solve_obstacle",
    "projected_residual",
    "energy",
]


@dataclass(frozen=True)
class BoxConstraints:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape:
            raise ContractViolation("lower and upper bounds differ in shape")
        if np.any(lo > hi):
            raise ContractViolation("box has lower > upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, n, lower=-1.0, upper=1.0):
        return cls(np.full(n, float(lower)), np.full(n, float(upper)))

    def project(self, x):
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def contains(self, x) -> bool:
        return bool(np.all(x >= self.lower) and np.all(x <= self.upper))


def _as_rank_one(A) -> RankOneMatrix:
    if isinstance(A, RankOneMatrix):
        return A
    if sp.issparse(A):
        return RankOneMatrix(A, np.zeros(A.shape[0]))
    dense = np.asarray(A, dtype=float)
    return RankOneMatrix(sp.csr_matrix(dense), np.zeros(dense.shape[0]))


def energy(A, b, x) -> float:
    return _as_rank_one(A).energy(x, b)


def projected_residual(A, b, box: BoxConstraints, x) -> float:
    """``||x - proj_box(x - (A x - b))||_inf``; zero exactly at the constrained minimizer."""
    A = _as_rank_one(A)
    g = A @ x - b
    return float(np.max(np.abs(x - box.project(x - g)), initial=0.0))


@numba.njit(cache=True)
def _pgs_kernel(indptr, indices, data, u, b, lo, hi, y, sweeps):
    n = y.size
    s = 0.0
    for i in range(n):
        s += u[i] * y[i]
    for _ in range(sweeps):
        for i in range(n):
            diag = u[i] * u[i]
            ay = u[i] * s
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j == i:
                    diag += data[p]
                ay += data[p] * y[j]
            if diag == 0.0:
                continue
            new = y[i] + (b[i] - ay) / diag
            if new < lo[i]:
                new = lo[i]
            elif new > hi[i]:
                new = hi[i]
            s += u[i] * (new - y[i])
            y[i] = new
    return y


def _sweep(A: RankOneMatrix, b, lo, hi, y, sweeps):
    S = A.sparse
    return _pgs_kernel(S.indptr, S.indices, S.data, A.u, b, lo, hi, y, sweeps)


def pgs_sweep(A, b, box: BoxConstraints, x, sweeps: int = 1):
    """Forward projected Gauss-Seidel sweep(s) starting from feasible ``x``.

    Each coordinate is minimized exactly and clamped; a clamped entry is set to
    the bound value itself.  Rows with zero diagonal are left unchanged.
    """
    A = _as_rank_one(A)
    x = np.asarray(x, dtype=float)
    if x.shape != box.lower.shape or A.shape[0] != x.size:
        raise ContractViolation("dimension mismatch in pgs_sweep")
    if not box.contains(x):
        raise ContractViolation("pgs_sweep needs a feasible starting point")
    y = x.copy()
    return _sweep(A, np.asarray(b, dtype=float), box.lower, box.upper, y, sweeps)


@numba.njit(cache=True)
def _restrict_minmax(indptr, indices, lo, hi, nc):
    clo = np.full(nc, -np.inf)
    chi = np.full(nc, np.inf)
    for i in range(nc):
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if lo[j] > clo[i]:
                clo[i] = lo[j]
            if hi[j] < chi[i]:
                chi[i] = hi[j]
    return clo, chi


def restrict_obstacles(P, lower, upper):
    """Coarse defect obstacles: max of fine lower bounds and min of fine upper
    bounds over the support of each prolongation column.

    Components where the result is infeasible (lower > upper) are frozen to
    ``[0, 0]``.  Returns ``(lower_c, upper_c, frozen_mask)``.
    """
    Pc = P if sp.isspmatrix_csc(P) else sp.csc_matrix(P)
    if not Pc.has_canonical_format:
        Pc = Pc.copy()
        Pc.sum_duplicates()
    clo, chi = _restrict_minmax(
        Pc.indptr, Pc.indices, np.asarray(lower, dtype=float), np.asarray(upper, dtype=float), Pc.shape[1]
    )
    frozen = clo > chi
    if np.any(frozen):
        clo[frozen] = 0.0
        chi[frozen] = 0.0
    return clo, chi, frozen


@dataclass
class ObstacleHierarchy:
    """Galerkin hierarchy, coarsest first.

    ``matrices[l]`` is the operator of level ``l``; ``prolongations[l]`` maps
    level ``l`` to level ``l + 1``.
    """

    matrices: list
    prolongations: list = field(default_factory=list)
    restrictions: list = field(default_factory=list)
    prolongations_csc: list = field(default_factory=list)

    def __post_init__(self):
        if not self.restrictions:
            self.restrictions = [P.T.tocsr() for P in self.prolongations]
        if not self.prolongations_csc:
            self.prolongations_csc = [sp.csc_matrix(P) for P in self.prolongations]

    @property
    def n_levels(self) -> int:
        return len(self.matrices)

    @property
    def finest(self) -> RankOneMatrix:
        return self.matrices[-1]


def build_hierarchy(A, max_levels: int = 10, min_coarse: int = 50, theta: float = 0.1) -> ObstacleHierarchy:
    A = _as_rank_one(A)
    fine_to_coarse = [A]
    prolongs = []
    current = A
    while len(fine_to_coarse) < max_levels and current.shape[0] > min_coarse:
        P = aggregation_prolongation(current.sparse, theta)
        nc = P.shape[1]
        if nc == 0 or nc > 0.9 * current.shape[0]:
            break
        current = current.galerkin(P)
        fine_to_coarse.append(current)
        prolongs.append(P)
    return ObstacleHierarchy(matrices=fine_to_coarse[::-1], prolongations=prolongs[::-1])


def _snap_to_bounds(x, box):
    x = box.project(x)
    tol = 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(x))
    at_lo = np.abs(x - box.lower) <= tol
    at_hi = np.abs(x - box.upper) <= tol
    x[at_lo] = box.lower[at_lo]
    x[at_hi] = box.upper[at_hi]
    return x


def mmg_vcycle(
    h: ObstacleHierarchy,
    u,
    b,
    box: BoxConstraints,
    sweeps: int = 3,
    coarse_tol: float = 1e-12,
    coarse_max_sweeps: int = 100,
):
    """One monotone multigrid V-cycle; returns the improved feasible iterate."""
    u = np.asarray(u, dtype=float)
    b = np.asarray(b, dtype=float)
    nlev = h.n_levels
    if u.size != h.finest.shape[0] or b.size != u.size or box.lower.size != u.size:
        raise ContractViolation("dimension mismatch in mmg_vcycle")
    if not box.contains(u):
        raise ContractViolation("mmg_vcycle needs a feasible iterate")

    r = b - h.finest @ u
    dlo = box.lower - u
    dhi = box.upper - u
    corrections = [None] * nlev
    frozen_levels = []
    for lev in range(nlev - 1, 0, -1):
        A = h.matrices[lev]
        y = _sweep(A, r, dlo, dhi, np.zeros_like(r), sweeps)
        r = r - A @ y
        dlo = dlo - y
        dhi = dhi - y
        corrections[lev] = y
        r = h.restrictions[lev - 1] @ r
        dlo, dhi, frozen = restrict_obstacles(h.prolongations_csc[lev - 1], dlo, dhi)
        if np.any(frozen):
            frozen_levels.append(lev - 1)

    A0 = h.matrices[0]
    y = np.zeros_like(r)
    for _ in range(coarse_max_sweeps):
        y = _sweep(A0, r, dlo, dhi, y, 1)
        g = A0 @ y - r
        if np.max(np.abs(y - np.minimum(np.maximum(y - g, dlo), dhi)), initial=0.0) <= coarse_tol:
            break
    corrections[0] = y

    for lev in range(1, nlev):
        corrections[lev] = corrections[lev] + h.prolongations[lev - 1] @ corrections[lev - 1]
    return _snap_to_bounds(u + corrections[-1], box)


class MonotoneMultigrid:
    """Reusable obstacle solver: the hierarchy is built once per matrix."""

    def __init__(self, A, max_levels=10, min_coarse=50, sweeps=3, coarse_tol=1e-12, coarse_max_sweeps=100):
        self.A = _as_rank_one(A)
        self.hierarchy = build_hierarchy(self.A, max_levels=max_levels, min_coarse=min_coarse)
        self.sweeps = sweeps
        self.coarse_tol = coarse_tol
        self.coarse_max_sweeps = coarse_max_sweeps

    def vcycle(self, u, b, box):
        return mmg_vcycle(
            self.hierarchy, u, b, box, self.sweeps, self.coarse_tol, self.coarse_max_sweeps
        )

    def solve(self, b, box, tol=1e-10, max_cycles=100, x0=None, check_energy=False):
        b = np.asarray(b, dtype=float)
        if x0 is None:
            x = box.project(np.zeros_like(b))
        else:
            x = np.array(x0, dtype=float)
            if not box.contains(x):
                raise ContractViolation("initial iterate violates the box")
        t0 = time.perf_counter()
        stats = SolveStats()
        stats.energies = [self.A.energy(x, b)]
        res = projected_residual(self.A, b, box, x)
        stats.residuals.append(res)
        cycles = 0
        while res > tol and cycles < max_cycles:
            x = self.vcycle(x, b, box)
            cycles += 1
            res = projected_residual(self.A, b, box, x)
            stats.residuals.append(res)
            stats.energies.append(self.A.energy(x, b))
            if check_energy and stats.energies[-1] > stats.energies[-2] + 1e-12 * max(1.0, abs(stats.energies[-2])):
                raise AssertionError("monotone multigrid increased the energy")
        stats.iterations = cycles
        stats.final_relres = res
        stats.converged = res <= tol
        stats.wall_time = time.perf_counter() - t0
        return x, stats


def solve_obstacle(A, b, box: BoxConstraints, tol: float = 1e-10, max_cycles: int = 100, x0=None, **kw):
    """Minimize ``1/2 v^T A v - b^T v`` over the box by repeated V-cycles.

    Stops when :func:`projected_residual` drops to ``tol``.
    """
    return MonotoneMultigrid(A, **kw).solve(b, box, tol=tol, max_cycles=max_cycles, x0=x0)
