"""``chobstacle`` command: run time steps, iteration sweeps or the dense spectrum report."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..nssn_uzawa import TimeStepConfig, ginzburg_landau_energy, mass
from ..runio import snapshot_name, write_manifest, write_snapshot
from ..sparse.krylov import KrylovConfig
from .experiments import run_single, write_csv
from .initial import SHAPES
from .spectrum import MAX_DENSE_P, format_report, spectrum_report

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2


def _float_list(text):
    return [float(v) for v in text.split(",")]


def _int_list(text):
    return [int(v) for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chobstacle", description=__doc__)
    ap.add_argument("--p", type=_int_list, default=[5], help="mesh level(s), h = 2^-p; comma separated")
    ap.add_argument("--epsilon", type=_float_list, default=[1e-2], help="interface parameter(s); comma separated")
    ap.add_argument("--tau", type=float, default=None, help="time step (default: epsilon)")
    ap.add_argument("--prec", default="1", help="preconditioner(s): 1, 2 or 1,2")
    ap.add_argument("--shape", default="square", help="initial condition(s): square, circle or square,circle")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--steps", type=int, default=1, help="time steps per run")
    ap.add_argument("--outer-tol", type=float, default=1e-7)
    ap.add_argument("--gmres-restart", type=int, default=200)
    ap.add_argument("--gmres-maxit", type=int, default=300)
    ap.add_argument("--gmres-rtol", type=float, default=1e-7)
    ap.add_argument("--csv", type=Path, default=None, help="write per-outer-step iteration counts here")
    ap.add_argument("--snapshots", type=Path, default=None, help="directory for state snapshots and the run manifest")
    ap.add_argument("--spectrum", action="store_true", help=f"dense spectrum report instead of a run (p <= {MAX_DENSE_P})")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _parse_precs(text):
    out = []
    for tok in text.split(","):
        tok = tok.strip().upper()
        if tok in ("1", "I"):
            out.append("I")
        elif tok in ("2", "II"):
            out.append("II")
        else:
            raise argparse.ArgumentTypeError(f"unknown preconditioner {tok!r}")
    return out


def _parse_shapes(text):
    shapes = [s.strip() for s in text.split(",")]
    for s in shapes:
        if s not in SHAPES:
            raise argparse.ArgumentTypeError(f"unknown shape {s!r}")
    return shapes


def _snapshot_writer(directory: Path, tau: float):
    def cb(sys_, state):
        write_snapshot(directory / snapshot_name(state.k), state.u, state.k, state.k * tau)
        log.info(
            "k=%d mass=%.15g energy=%.15g outer=%d",
            state.k, mass(sys_, state.u), ginzburg_landau_energy(sys_, state.u), state.i,
        )

    return cb


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        precs = _parse_precs(args.prec)
        shapes = _parse_shapes(args.shape)
    except argparse.ArgumentTypeError as exc:
        ap.error(str(exc))

    if args.spectrum:
        for p in args.p:
            for eps in args.epsilon:
                for shape in shapes:
                    rep = spectrum_report(p, eps, args.tau, mask_source=shape, seed=args.seed)
                    print(format_report(rep))
                    print()
        return EXIT_OK

    krylov = KrylovConfig(restart_dim=args.gmres_restart, max_iters=args.gmres_maxit, rtol=args.gmres_rtol)
    summaries = []
    for p in args.p:
        for eps in args.epsilon:
            tau = args.tau if args.tau is not None else eps
            base = TimeStepConfig(epsilon=eps, tau=tau, outer_tol=args.outer_tol, krylov=krylov)
            for shape in shapes:
                for prec in precs:
                    cb = None
                    if args.snapshots is not None:
                        run_dir = args.snapshots / f"{shape}_p{p}_eps{eps:g}_prec{prec}"
                        run_dir.mkdir(parents=True, exist_ok=True)
                        write_manifest(
                            run_dir / "manifest.txt",
                            {
                                "p": p, "epsilon": repr(eps), "tau": repr(tau), "prec": prec, "seed": args.seed,
                                "shape": shape, "steps": args.steps, "outer_tol": repr(args.outer_tol),
                                "gmres_restart": args.gmres_restart, "gmres_maxit": args.gmres_maxit,
                                "gmres_rtol": repr(args.gmres_rtol),
                            },
                        )
                        cb = _snapshot_writer(run_dir, tau)
                    summary = run_single(
                        shape, p, eps, prec, tau=tau, seed=args.seed, steps=args.steps,
                        base_cfg=replace(base, prec=prec), callback=cb,
                    )
                    summaries.append(summary)
                    print(
                        f"{shape:6s} p={p} eps={eps:g} tau={tau:g} prec={prec:2s} "
                        f"first={summary.first_step_its} total={summary.total_its} outer={summary.outer_steps} "
                        f"converged={summary.converged} time={summary.wall_time:.2f}s"
                    )
    if args.csv is not None:
        write_csv(summaries, args.csv)
    return EXIT_OK if all(s.converged for s in summaries) else EXIT_NOT_CONVERGED


if __name__ == "__main__":
    sys.exit(main())
