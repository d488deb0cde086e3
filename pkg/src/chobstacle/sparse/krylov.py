"""Krylov solvers: right-preconditioned restarted GMRES and PCG."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError

__all__ = ["KrylovConfig", "SolveStats", "as_apply", "gmres_right", "pcg"]


@dataclass(frozen=True)
class KrylovConfig:
    """GMRES settings; defaults follow the published experiments."""

    restart_dim: int = 200
    max_iters: int = 300
    rtol: float = 1e-7

    def __post_init__(self):
        if self.restart_dim < 1:
            raise ConfigurationError("restart_dim must be >= 1")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not 0.0 < self.rtol < 1.0:
            raise ConfigurationError("rtol must lie in (0, 1)")


@dataclass
class SolveStats:
    iterations: int = 0
    final_relres: float = np.inf
    converged: bool = False
    wall_time: float = 0.0
    residuals: list = field(default_factory=list, repr=False)


def as_apply(op):
    """Turn a matrix, LinearOperator or callable into ``x -> op(x)``."""
    if op is None:
        return lambda x: x
    if callable(op) and not hasattr(op, "shape"):
        return op
    if hasattr(op, "matvec"):
        return op.matvec
    return lambda x: op @ x


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres_right(op, precond, b, cfg: KrylovConfig | None = None, x0=None):
    """Restarted GMRES with right preconditioning.

    The preconditioned directions ``z_j = P v_j`` are stored (flexible form), so
    inner solves that are only accurate to a tolerance are handled correctly.
    The monitored norm is that of the true residual ``b - op(x)``.

    Returns ``(x, SolveStats)``; non-convergence is reported, not raised.
    """
    cfg = cfg or KrylovConfig()
    A = as_apply(op)
    P = as_apply(precond)
    b = np.asarray(b, dtype=float)
    n = b.size
    t0 = time.perf_counter()
    stats = SolveStats()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        stats.final_relres = 0.0
        stats.converged = True
        stats.residuals.append(0.0)
        stats.wall_time = time.perf_counter() - t0
        return np.zeros(n), stats

    r = b - A(x) if x0 is not None else b.copy()
    beta = np.linalg.norm(r)
    stats.residuals.append(beta / bnorm)
    total = 0
    m = cfg.restart_dim
    while True:
        if beta / bnorm <= cfg.rtol:
            stats.converged = True
            break
        if total >= cfg.max_iters:
            break
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            Z[j] = P(V[j])
            w = A(Z[j])
            wnorm0 = np.linalg.norm(w)
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            hnext = np.linalg.norm(w)
            if hnext > 0.0:
                # one reorthogonalization pass when orthogonality is visibly lost
                loss = np.max(np.abs(V[: j + 1] @ w)) / hnext
                if loss > 1e-8:
                    corr = V[: j + 1] @ w
                    w -= corr @ V[: j + 1]
                    H[: j + 1, j] += corr
                    hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -sn[i] * hi + cs[i] * hi1
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            res = abs(g[j + 1])
            stats.residuals.append(res / bnorm)
            lucky = hnext <= 1e-14 * max(wnorm0, 1e-300)
            if res / bnorm <= cfg.rtol or lucky or total >= cfg.max_iters:
                break
            V[j + 1] = w / hnext
        y = _back_substitute(H[:j_done, :j_done], g[:j_done])
        x += y @ Z[:j_done]
        r = b - A(x)
        beta = np.linalg.norm(r)
        stats.residuals[-1] = beta / bnorm
    stats.iterations = total
    stats.final_relres = beta / bnorm
    stats.converged = stats.final_relres <= cfg.rtol
    stats.wall_time = time.perf_counter() - t0
    return x, stats


def _back_substitute(R, g):
    k = R.shape[0]
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        if R[i, i] == 0.0:
            y[i] = 0.0
            continue
        y[i] = (g[i] - R[i, i + 1 :] @ y[i + 1 :]) / R[i, i]
    return y


def pcg(op, b, precond=None, rtol=1e-10, maxiter=None, x0=None):
    """Preconditioned conjugate gradients for SPD ``op``.

    Stops on ``||b - op(x)|| <= rtol * ||b||`` (recursive residual).
    """
    A = as_apply(op)
    P = as_apply(precond)
    b = np.asarray(b, dtype=float)
    n = b.size
    maxiter = maxiter or max(2 * n, 50)
    t0 = time.perf_counter()
    stats = SolveStats()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        stats.converged, stats.final_relres = True, 0.0
        return np.zeros(n), stats
    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - A(x)
    z = P(r)
    p = z.copy()
    rz = r @ z
    relres = np.linalg.norm(r) / bnorm
    stats.residuals.append(relres)
    it = 0
    while relres > rtol and it < maxiter:
        q = A(p)
        pq = p @ q
        if pq <= 0.0:
            break
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        relres = np.linalg.norm(r) / bnorm
        stats.residuals.append(relres)
        if relres <= rtol:
            break
        z = P(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    stats.iterations = it
    stats.final_relres = relres
    stats.converged = relres <= rtol
    stats.wall_time = time.perf_counter() - t0
    return x, stats
