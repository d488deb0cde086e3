"""Dense spectral diagnostics of the truncated system on small meshes."""
from __future__ import annotations

import numpy as np

from ..exceptions import ConfigurationError
from ..mesh_fem import assemble_system, build_uniform_mesh
from ..precond import prec1_spectrum, spectrum_check_prec2
from ..saddle_reduce import TruncationMask, compute_truncation, truncate_system
from .initial import SHAPES, gen_initial, make_rng

__all__ = ["MAX_DENSE_P", "interlacing_check", "spectrum_report", "format_report", "resolve_mask"]

MAX_DENSE_P = 4


def interlacing_check(A_dense, mask: TruncationMask, tol=1e-10) -> dict:
    """Eigenvalues of the inactive principal block of ``A`` sit between those of ``A``.

    With ``k`` inactive nodes, ``lam_i(A) <= mu_i <= lam_{n-k+i}(A)``.
    """
    A = np.asarray(A_dense, dtype=float)
    n = A.shape[0]
    keep = ~mask.active
    k = int(keep.sum())
    lam = np.linalg.eigvalsh(A)
    if k == 0:
        return {"ok": True, "k": 0, "mu": np.empty(0), "lam": lam, "violation": 0.0}
    mu = np.linalg.eigvalsh(A[np.ix_(keep, keep)])
    scale = max(1.0, float(np.max(np.abs(lam))))
    lower = lam[:k] - mu
    upper = mu - lam[n - k :]
    violation = float(max(np.max(lower), np.max(upper), 0.0))
    return {"ok": violation <= tol * scale, "k": k, "mu": mu, "lam": lam, "violation": violation}


def resolve_mask(mask_source, sys, seed=0) -> TruncationMask:
    """``mask_source``: a shape name (initial-condition active set), ``'random'``,
    ``'none'``, ``'all'``, a boolean array or a :class:`TruncationMask`."""
    n = sys.n
    if isinstance(mask_source, TruncationMask):
        return mask_source
    if isinstance(mask_source, str):
        if mask_source in SHAPES:
            return compute_truncation(gen_initial(mask_source, _p_of(sys), seed, mesh=sys.mesh))
        if mask_source == "random":
            rng = make_rng(seed)
            frac = rng.uniform(0.1, 0.9)
            active = rng.random(n) < frac
            if active.all():
                active[rng.integers(n)] = False
            return TruncationMask(active)
        if mask_source == "none":
            return TruncationMask(np.zeros(n, dtype=bool))
        if mask_source == "all":
            return TruncationMask(np.ones(n, dtype=bool))
        raise ConfigurationError(f"unknown mask source {mask_source!r}")
    return TruncationMask.from_active(mask_source)


def _p_of(sys) -> int:
    return int(round(np.log2(sys.mesh.n_side - 1)))


def spectrum_report(p, epsilon, tau=None, mask_source="square", seed=0) -> dict:
    if not 2 <= p <= MAX_DENSE_P:
        raise ConfigurationError(f"dense spectrum analysis supports 2 <= p <= {MAX_DENSE_P}")
    tau = epsilon if tau is None else tau
    sys_ = assemble_system(build_uniform_mesh(p), epsilon, tau)
    mask = resolve_mask(mask_source, sys_, seed)
    red = truncate_system(sys_, mask)
    A = sys_.A.toarray()
    report = {"p": p, "epsilon": epsilon, "tau": tau, "n": sys_.n, "n_active": mask.n_active}
    report["interlacing"] = interlacing_check(A, mask)
    # K_hat is singular when nothing is active (K annihilates constants)
    if mask.n_active > 0:
        report["k_hat_inverse_min"] = float(np.linalg.inv(red.K_hat.toarray()).min())
    if mask.n_inactive > 0:
        S = red.schur_dense()
        report["schur_symmetric"] = bool(np.allclose(S, S.T, rtol=0, atol=1e-12 * np.abs(S).max()))
        report["schur_min_eig"] = float(np.linalg.eigvalsh(0.5 * (S + S.T)).min())
        p1 = prec1_spectrum(red, untruncated_lemma_form=False)
        report["prec1_radius"] = p1["radius"]
        report["prec1_min_abs_eig"] = p1["min_abs_eig"]
        report["prec1_cond"] = p1["cond"]
        p2 = spectrum_check_prec2(red)
        report["prec2_near_one"] = p2["near_one"]
        report["prec2_k"] = p2["k"]
        report["prec2_cluster_ok"] = p2["ok"]
    return report


def format_report(rep: dict) -> str:
    lines = [f"p={rep['p']} epsilon={rep['epsilon']:g} tau={rep['tau']:g} n={rep['n']} active={rep['n_active']}"]
    il = rep["interlacing"]
    lines.append(f"interlacing: {'ok' if il['ok'] else 'VIOLATED'} (k={il['k']}, violation={il['violation']:.2e})")
    if "k_hat_inverse_min" in rep:
        lines.append(f"min entry of K_hat^-1: {rep['k_hat_inverse_min']:.3e}")
    if "schur_min_eig" in rep:
        lines.append(f"Schur complement: symmetric={rep['schur_symmetric']} min eig={rep['schur_min_eig']:.3e}")
        lines.append(
            f"prec I: radius={rep['prec1_radius']:.4f} min|eig|={rep['prec1_min_abs_eig']:.4f} cond={rep['prec1_cond']:.4f}"
        )
        lines.append(f"prec II: {rep['prec2_near_one']} eigenvalues at 1 (k={rep['prec2_k']})")
    else:
        lines.append("every node active: Schur complement singular, preconditioner checks skipped")
    return "\n".join(lines)
