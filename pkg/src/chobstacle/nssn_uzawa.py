"""Nonsmooth Newton-Schur (preconditioned Uzawa) iteration and semi-implicit
time stepping for the Cahn-Hilliard equation with obstacle potential.

Per time step the discrete problem is the set-valued saddle-point system

    A u + dI(u) + M w  contains  f,      M u - C w = g,

with ``f = g = M u_prev``.  (``w`` here is minus the physical chemical
potential; with this sign the spatially uniform state is an exact fixed
point.)  Each outer step solves the obstacle problem for ``u(w)``, solves the
truncated linear system for a Newton direction ``d`` of the concave dual
function, and moves ``w`` by a bisection step length.
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError
from .mesh_fem import SaddleSystem
from .obstacle_mg import BoxConstraints, MonotoneMultigrid
from .precond import InnerConfig, PrecondI, PrecondII
from .saddle_reduce import (
    SingularSchurWarning,
    TruncationMask,
    compute_truncation,
    scale_variables,
    truncate_system,
)
from .sparse.krylov import KrylovConfig, gmres_right

log = logging.getLogger(__name__)

__all__ = [
    "TimeStepConfig",
    "UzawaState",
    "NonsmoothNewtonSchur",
    "initial_state",
    "uzawa_iterate",
    "bisection_step_length",
    "time_step",
    "ginzburg_landau_energy",
    "mass",
]


@dataclass(frozen=True)
class TimeStepConfig:
    """Settings for one semi-implicit time step and its outer iteration.

    Parameters
    ----------
    epsilon, tau : float
        Interface parameter and time step; ``tau`` defaults to ``epsilon``.
    outer_tol, mass_tol : float
        Stop when the relative reduced residual is below ``outer_tol`` and the
        mass defect below ``mass_tol``.
    obstacle_floor, obstacle_forcing : float
        Absolute floor and relative forcing for the inner obstacle solve.
    obstacle_max_cycles, obstacle_sweeps : int
        V-cycle cap and smoothing sweeps per level of that solve.
    max_outer : int
        Outer iteration cap per time step.
    bisection_budget, rho_max, bisection_tol : int, float, float
        Step-length search: bisection halvings, initial bracket and tolerance.
    prec : {"I", "II"}
        Block preconditioner for the GMRES solve of the Newton system.
    krylov, inner : KrylovConfig, InnerConfig
        Outer GMRES settings and inner elliptic solver for the blocks.
    lump_mass, truncate_q, schur_mass : bool, bool, str
        Preconditioner variants; see :mod:`chobstacle.precond`.
    abort_on_failure : bool
        Raise instead of flagging a non-converged step.
    no_sign_change : {"one", "rho_max"}
        Step length taken when the directional derivative never changes sign.
    first_mask : {"previous", "current"}
        Truncation used by the first outer step of a time step.
    """

    epsilon: float
    tau: float | None = None
    outer_tol: float = 1e-7
    mass_tol: float = 1e-10
    obstacle_floor: float = 1e-12
    max_outer: int = 50
    bisection_budget: int = 10
    rho_max: float = 2.0
    bisection_tol: float = 1e-2
    prec: str = "I"
    krylov: KrylovConfig = KrylovConfig()
    inner: InnerConfig = InnerConfig()
    obstacle_forcing: float = 1e-4
    obstacle_max_cycles: int = 200
    obstacle_sweeps: int = 3
    lump_mass: bool = False
    truncate_q: bool = False
    abort_on_failure: bool = False
    no_sign_change: str = "one"
    first_mask: str = "previous"
    schur_mass: str = "inactive"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigurationError("epsilon must be positive")
        if self.tau is None:
            object.__setattr__(self, "tau", float(self.epsilon))
        if not self.tau > 0:
            raise ConfigurationError("tau must be positive")
        prec = str(self.prec).upper().replace("2", "II").replace("1", "I")
        if prec not in ("I", "II"):
            raise ConfigurationError(f"prec must be I or II, got {self.prec!r}")
        object.__setattr__(self, "prec", prec)
        if self.bisection_budget < 1 or self.rho_max <= 0:
            raise ConfigurationError("bisection needs budget >= 1 and rho_max > 0")
        if self.no_sign_change not in ("one", "rho_max"):
            raise ConfigurationError("no_sign_change must be 'one' or 'rho_max'")
        if self.first_mask not in ("previous", "current"):
            raise ConfigurationError("first_mask must be 'previous' or 'current'")
        if self.schur_mass not in ("full", "inactive"):
            raise ConfigurationError("schur_mass must be 'full' or 'inactive'")
        if not (self.outer_tol > 0 and self.mass_tol > 0 and self.obstacle_forcing > 0):
            raise ConfigurationError("tolerances must be positive")
        if self.max_outer < 1:
            raise ConfigurationError("max_outer must be >= 1")


@dataclass
class UzawaState:
    """Outer-iteration state for time step ``k``.

    ``u`` is always feasible; ``residual`` is ``M u - C w - g`` for the current
    pair.  Histories are per outer step of the current time step.
    """

    u: np.ndarray
    w: np.ndarray
    u_prev: np.ndarray
    k: int = 0
    i: int = 0
    residual: np.ndarray | None = None
    relres: float = np.inf
    converged: bool = False
    relres_history: list = field(default_factory=list)
    gmres_iterations: list = field(default_factory=list)
    gmres_time: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    active_counts: list = field(default_factory=list)
    masks: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)
    time: float = 0.0

    @property
    def total_gmres(self) -> int:
        return int(sum(self.gmres_iterations))


def mass(sys: SaddleSystem, u) -> float:
    return float(sys.m @ u)


def ginzburg_landau_energy(sys: SaddleSystem, u) -> float:
    """``eps/2 u^T K u + 1/2 (1^T M 1 - u^T M u)`` for feasible ``u``."""
    return float(0.5 * sys.epsilon * (u @ (sys.K @ u)) + 0.5 * (sys.m.sum() - u @ (sys.M @ u)))


class NonsmoothNewtonSchur:
    """Holds the system, the obstacle multigrid hierarchy and the configuration."""

    def __init__(self, sys: SaddleSystem, cfg: TimeStepConfig):
        if not np.isclose(sys.epsilon, cfg.epsilon) or not np.isclose(sys.tau, cfg.tau):
            raise ConfigurationError("system and configuration disagree on epsilon/tau")
        self.sys = sys
        self.cfg = cfg
        self.box = BoxConstraints.uniform(sys.n)
        self.mmg = MonotoneMultigrid(sys.A, sweeps=cfg.obstacle_sweeps)

    # -- building blocks -------------------------------------------------
    def rhs(self, u_prev):
        f = self.sys.M @ u_prev
        return f, f.copy()

    def obstacle(self, w, u_prev, x0=None, tol=None):
        f, _ = self.rhs(u_prev)
        b = f - self.sys.M @ w
        if tol is None:
            tol = self._obstacle_floor(u_prev)
        u, st = self.mmg.solve(b, self.box, tol=tol, max_cycles=self.cfg.obstacle_max_cycles, x0=x0)
        return u, st

    def dual_residual(self, u, w, u_prev):
        _, g = self.rhs(u_prev)
        return self.sys.M @ u - self.sys.C @ w - g

    def dual_value(self, u, w, u_prev) -> float:
        """Concave dual function ``min_u L(u, w)`` evaluated at ``u = u(w)``."""
        f, g = self.rhs(u_prev)
        A = self.sys.A
        return float(0.5 * (u @ (A @ u)) - f @ u + w @ (self.sys.M @ u - g) - 0.5 * (w @ (self.sys.C @ w)))

    def _gnorm(self, u_prev):
        _, g = self.rhs(u_prev)
        nrm = np.linalg.norm(g)
        return nrm if nrm > 0 else 1.0

    def _obstacle_floor(self, u_prev):
        _, g = self.rhs(u_prev)
        return self.cfg.obstacle_floor * max(np.max(np.abs(g)), 1e-300)

    def _obstacle_tol(self, state):
        floor = self._obstacle_floor(state.u_prev)
        if state.residual is None:
            return max(self.cfg.obstacle_forcing * np.max(np.abs(self.rhs(state.u_prev)[1])), floor)
        return max(self.cfg.obstacle_forcing * np.max(np.abs(state.residual)), floor)

    def _refresh(self, state, x0=None):
        u, _ = self.obstacle(state.w, state.u_prev, x0=x0 if x0 is not None else state.u, tol=self._obstacle_tol(state))
        state.u = u
        state.residual = self.dual_residual(u, state.w, state.u_prev)
        state.relres = float(np.linalg.norm(state.residual) / self._gnorm(state.u_prev))
        return state

    def mass_defect(self, state) -> float:
        """``1^T (M u - M u_prev)`` relative to the domain measure; equals ``sum(residual)``."""
        return float(abs(state.residual.sum()) / self.sys.m.sum())

    def is_converged(self, state) -> bool:
        return state.relres <= self.cfg.outer_tol and self.mass_defect(state) <= self.cfg.mass_tol

    def preconditioner(self, red):
        if self.cfg.prec == "I":
            return PrecondI(
                red, self.cfg.inner, lump_mass=self.cfg.lump_mass, truncate_q=self.cfg.truncate_q,
                schur_mass=self.cfg.schur_mass,
            )
        return PrecondII(red, self.cfg.inner, lump_mass=self.cfg.lump_mass, schur_mass=self.cfg.schur_mass)

    def newton_direction(self, state, mask: TruncationMask):
        """Solve the truncated system for ``d = S^{-1} (M u - C w - g)``."""
        flags = []
        if mask.n_inactive == 0:
            warnings.warn(
                "every node is active: Schur complement singular, using the untruncated direction",
                SingularSchurWarning,
                stacklevel=2,
            )
            flags.append("singular_schur")
            mask = TruncationMask(np.zeros(mask.n, dtype=bool))
        red = truncate_system(self.sys, mask)
        scaled = scale_variables(self.sys, -state.residual)
        P = self.preconditioner(red)
        sol, st = gmres_right(red.scaled_operator(), P, scaled.rhs, self.cfg.krylov)
        if not st.converged:
            flags.append("gmres_not_converged")
        if P.inner_failures:
            flags.append("inner_not_converged")
        _, d = scaled.unscale(sol)
        return d, st, flags

    # -- the three operations ---------------------------------------------
    def bisection_step_length(self, state, d, budget=None, expand=False):
        """Bisection on ``phi'(rho) = <H(w + rho d), d>`` over ``(0, rho_max]``.

        Returns ``(rho, u, residual, flags)`` where ``u`` is the obstacle
        solution at ``w + rho d``.  The first trial point is the bracket
        midpoint; the search stops early once ``|phi'| <= bisection_tol *
        phi'(0)``.  Without a sign change in the bracket, ``rho = 1``, unless
        ``expand`` is set: then the bracket is doubled until ``phi'`` changes
        sign (used when every node is active and ``phi`` is affine near ``w``).
        """
        budget = budget or self.cfg.bisection_budget
        rho_max = self.cfg.rho_max
        d = np.asarray(d, dtype=float)
        if not np.any(d):
            return 0.0, state.u, state.residual, ["zero_direction"]
        slope0 = float(state.residual @ d)
        flags = []
        if slope0 <= 0.0:
            flags.append("not_ascent")
        tol = self._obstacle_tol(state)
        cache = {}

        def dphi(rho):
            if rho not in cache:
                u, _ = self.obstacle(state.w + rho * d, state.u_prev, x0=state.u, tol=tol)
                H = self.dual_residual(u, state.w + rho * d, state.u_prev)
                cache[rho] = (float(H @ d), u, H)
            return cache[rho]

        lo, hi = 0.0, rho_max
        hi_checked = False
        rho = None
        for _ in range(budget):
            mid = 0.5 * (lo + hi)
            val, _, _ = dphi(mid)
            rho = mid
            if abs(val) <= self.cfg.bisection_tol * abs(slope0):
                break
            if val > 0.0:
                if not hi_checked:
                    hi_checked = True
                    if dphi(hi)[0] > 0.0:
                        if expand:
                            lo, hi = self._expand_bracket(dphi, hi)
                            flags.append("expanded_bracket")
                            if dphi(hi)[0] > 0.0:
                                flags.append("no_sign_change")
                                rho = hi
                                break
                            continue
                        flags.append("no_sign_change")
                        rho = rho_max if self.cfg.no_sign_change == "rho_max" else 1.0
                        break
                lo = mid
            else:
                hi_checked = True
                hi = mid
        else:
            if cache[rho][0] < 0.0 and lo > 0.0:
                rho = lo
        _, u, H = dphi(rho)
        return rho, u, H, flags

    @staticmethod
    def _expand_bracket(dphi, hi, max_doublings=60):
        lo = hi
        for _ in range(max_doublings):
            lo, hi = hi, 2.0 * hi
            if dphi(hi)[0] <= 0.0:
                break
        return lo, hi

    def uzawa_iterate(self, state: UzawaState) -> UzawaState:
        if state.residual is None:
            self._refresh(state)
        if state.i == 0 and self.cfg.first_mask == "previous":
            mask = compute_truncation(state.u_prev)
        else:
            mask = compute_truncation(state.u)
        t0 = time.perf_counter()
        d, st, flags = self.newton_direction(state, mask)
        state.gmres_iterations.append(st.iterations)
        state.gmres_time.append(time.perf_counter() - t0)
        state.active_counts.append(mask.n_active)
        state.masks.append(mask)
        # with every node of the current iterate active, u(w) is locally constant
        # and phi is affine: the bracket must grow to find the kink
        all_active = not np.any(np.abs(state.u) < 1.0)
        rho, u, H, bflags = self.bisection_step_length(state, d, expand=all_active)
        flags += bflags
        state.w = state.w + rho * d
        state.u = u
        state.residual = H
        state.relres = float(np.linalg.norm(H) / self._gnorm(state.u_prev))
        state.relres_history.append(state.relres)
        state.rhos.append(rho)
        state.flags.append(tuple(flags))
        state.i += 1
        state.converged = self.is_converged(state)
        return state

    def time_step(self, state: UzawaState) -> UzawaState:
        """Advance one time step from ``state.u`` (the converged previous step)."""
        t0 = time.perf_counter()
        new = UzawaState(u=state.u.copy(), w=state.w.copy(), u_prev=state.u.copy(), k=state.k + 1)
        self._refresh(new)
        new.relres_history.append(new.relres)
        new.converged = self.is_converged(new)
        while not new.converged and new.i < self.cfg.max_outer:
            self.uzawa_iterate(new)
        if not new.converged:
            msg = f"time step {new.k}: outer iteration stopped at relres {new.relres:.2e}"
            if self.cfg.abort_on_failure:
                raise RuntimeError(msg)
            log.warning(msg)
        new.time = time.perf_counter() - t0
        return new

    def run(self, u0, steps, callback=None):
        state = initial_state(u0)
        history = []
        for _ in range(steps):
            state = self.time_step(state)
            history.append(state)
            if callback is not None:
                callback(state)
        return history


def initial_state(u0, w0=None) -> UzawaState:
    """State at ``k = 0``; ``w`` starts at zero unless given."""
    u0 = np.asarray(u0, dtype=float)
    if np.any(np.abs(u0) > 1.0):
        raise ConfigurationError("initial order parameter must lie in [-1, 1]")
    w = np.zeros_like(u0) if w0 is None else np.asarray(w0, dtype=float).copy()
    return UzawaState(u=u0.copy(), w=w, u_prev=u0.copy(), k=0, converged=True)


_SOLVERS: dict = {}


def _solver(sys, cfg) -> NonsmoothNewtonSchur:
    key = (id(sys), cfg)
    hit = _SOLVERS.get(key)
    if hit is None or hit.sys is not sys:
        if len(_SOLVERS) > 8:
            _SOLVERS.clear()
        hit = NonsmoothNewtonSchur(sys, cfg)
        _SOLVERS[key] = hit
    return hit


def uzawa_iterate(state: UzawaState, sys: SaddleSystem, cfg: TimeStepConfig) -> UzawaState:
    return _solver(sys, cfg).uzawa_iterate(state)


def bisection_step_length(state: UzawaState, d, sys: SaddleSystem, budget: int, cfg: TimeStepConfig | None = None):
    cfg = cfg or TimeStepConfig(epsilon=sys.epsilon, tau=sys.tau)
    return _solver(sys, cfg).bisection_step_length(state, d, budget)


def time_step(state: UzawaState, sys: SaddleSystem, cfg: TimeStepConfig) -> UzawaState:
    return _solver(sys, cfg).time_step(state)
