"""Iteration-count sweeps over mesh size, epsilon, shape and preconditioner."""
from __future__ import annotations

import csv
import io
import itertools
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from ..mesh_fem import assemble_system, build_uniform_mesh
from ..nssn_uzawa import NonsmoothNewtonSchur, TimeStepConfig, initial_state
from .initial import gen_initial

log = logging.getLogger(__name__)

__all__ = ["CSV_COLUMNS", "ExperimentRecord", "RunSummary", "run_single", "run_table", "write_csv", "read_csv"]

CSV_COLUMNS = ("shape", "p", "epsilon", "tau", "prec", "step", "its", "time", "converged")


@dataclass(frozen=True)
class ExperimentRecord:
    """GMRES work of one outer step of one run."""

    shape: str
    p: int
    epsilon: float
    tau: float
    prec: str
    outer_step: int
    gmres_iterations: int
    wall_time_seconds: float
    converged: bool

    def __post_init__(self):
        if self.gmres_iterations < 0:
            raise ValueError("gmres_iterations must be non-negative")

    def row(self) -> dict:
        return {
            "shape": self.shape,
            "p": self.p,
            "epsilon": repr(float(self.epsilon)),
            "tau": repr(float(self.tau)),
            "prec": self.prec,
            "step": self.outer_step,
            "its": self.gmres_iterations,
            "time": f"{self.wall_time_seconds:.6f}",
            "converged": str(bool(self.converged)).lower(),
        }


@dataclass
class RunSummary:
    shape: str
    p: int
    epsilon: float
    tau: float
    prec: str
    records: list
    first_step_its: int
    total_its: int
    outer_steps: int
    converged: bool
    wall_time: float
    history: list


def run_single(shape, p, epsilon, prec="I", tau=None, seed=0, steps=1, base_cfg=None, callback=None) -> RunSummary:
    """Run ``steps`` time steps from the ``shape`` initial condition.

    Iteration counts come from the first time step; later steps only feed the
    callback (snapshots, energies).
    """
    tau = epsilon if tau is None else tau
    cfg = base_cfg or TimeStepConfig(epsilon=epsilon)
    cfg = replace(cfg, epsilon=epsilon, tau=tau, prec=prec)
    prec = cfg.prec
    mesh = build_uniform_mesh(p)
    sys_ = assemble_system(mesh, epsilon, tau)
    solver = NonsmoothNewtonSchur(sys_, cfg)
    u0 = gen_initial(shape, p, seed, mesh=mesh)
    state = initial_state(u0)
    if callback is not None:
        callback(sys_, state)
    history = []
    try:
        for _ in range(steps):
            state = solver.time_step(state)
            history.append(state)
            if callback is not None:
                callback(sys_, state)
    except Exception as exc:  # a failed row must not stop a sweep
        log.error("run %s p=%d eps=%g prec=%s failed: %s", shape, p, epsilon, prec, exc)
        rec = ExperimentRecord(shape, p, epsilon, tau, prec, 0, 0, 0.0, False)
        return RunSummary(shape, p, epsilon, tau, prec, [rec], 0, 0, 0, False, 0.0, history)
    first = history[0]
    records = [
        ExperimentRecord(shape, p, epsilon, tau, prec, i + 1, its, t, first.converged)
        for i, (its, t) in enumerate(zip(first.gmres_iterations, first.gmres_time))
    ]
    if not records:
        records = [ExperimentRecord(shape, p, epsilon, tau, prec, 0, 0, 0.0, first.converged)]
    return RunSummary(
        shape=shape,
        p=p,
        epsilon=epsilon,
        tau=tau,
        prec=prec,
        records=records,
        first_step_its=first.gmres_iterations[0] if first.gmres_iterations else 0,
        total_its=first.total_gmres,
        outer_steps=first.i,
        converged=all(s.converged for s in history),
        wall_time=sum(s.time for s in history),
        history=history,
    )


def run_table(ps, epsilons, shapes=("square",), precs=("I",), seed=0, base_cfg=None, tau_factor=1.0):
    """One time step per ``(p, epsilon, shape, prec)``; returns the run summaries."""
    out = []
    for p, eps, shape, prec in itertools.product(ps, epsilons, shapes, precs):
        out.append(run_single(shape, p, eps, prec, tau=tau_factor * eps, seed=seed, base_cfg=base_cfg))
    return out


def write_csv(summaries, path=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for summary in summaries:
        for rec in summary.records:
            writer.writerow(rec.row())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path) -> list:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
