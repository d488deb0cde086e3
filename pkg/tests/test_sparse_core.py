import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from chobstacle.exceptions import ConfigurationError, NumericalError
from chobstacle.mesh_fem import assemble_mass, assemble_stiffness, build_uniform_mesh
from chobstacle.sparse import (
    AggregationAMG,
    KrylovConfig,
    RankOneMatrix,
    ShermanMorrisonSolver,
    amg_hierarchy,
    gmres_right,
    ic_factor,
    pcg,
    smw_solve,
    standard_aggregation,
)


def _laplacian(p):
    return assemble_stiffness(build_uniform_mesh(p))


def _spd(rng, n):
    X = rng.standard_normal((n, n))
    return X @ X.T + n * np.eye(n)


# GMRES


def test_gmres_identity_one_iteration():
    b = np.arange(1.0, 8.0)
    x, st_ = gmres_right(sp.identity(7), None, b)
    assert st_.iterations == 1 and st_.converged
    assert np.allclose(x, b, rtol=0, atol=1e-14)


def test_gmres_exact_preconditioner_one_iteration():
    D = sp.diags(np.arange(1.0, 6.0))
    Dinv = sp.diags(1.0 / np.arange(1.0, 6.0))
    b = np.ones(5)
    x, st_ = gmres_right(D, Dinv, b)
    assert st_.iterations == 1 and st_.converged
    assert np.allclose(D @ x, b, atol=1e-14)


def test_gmres_matches_dense_lu():
    rng = np.random.default_rng(3)
    A = _spd(rng, 5)
    b = rng.standard_normal(5)
    x, st_ = gmres_right(A, None, b, KrylovConfig(rtol=1e-13))
    ref = sla.lu_solve(sla.lu_factor(A), b)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) <= 1e-10
    assert st_.converged


def test_gmres_reports_true_residual_and_converged_flag():
    rng = np.random.default_rng(4)
    A = _laplacian(4) + sp.identity(289) * 1e-2
    b = rng.standard_normal(289)
    cfg = KrylovConfig(restart_dim=20, max_iters=400, rtol=1e-8)
    x, st_ = gmres_right(A, ic_factor(A), b, cfg)
    true = np.linalg.norm(b - A @ x) / np.linalg.norm(b)
    assert st_.final_relres == pytest.approx(true, rel=1e-10)
    assert st_.converged == (st_.final_relres <= cfg.rtol)
    assert st_.converged


def test_gmres_stagnation_is_not_an_exception():
    A = _laplacian(4) + sp.identity(289) * 1e-3
    b = np.random.default_rng(5).standard_normal(289)
    x, st_ = gmres_right(A, None, b, KrylovConfig(restart_dim=3, max_iters=5, rtol=1e-12))
    assert not st_.converged
    assert st_.iterations == 5
    assert st_.final_relres > 1e-12


def test_gmres_zero_rhs():
    x, st_ = gmres_right(sp.identity(4), None, np.zeros(4))
    assert st_.converged and st_.iterations == 0 and not np.any(x)


def test_gmres_residuals_non_increasing_within_cycle():
    rng = np.random.default_rng(6)
    A = sp.csr_matrix(_spd(rng, 40) + np.triu(rng.standard_normal((40, 40)), 1))
    b = rng.standard_normal(40)
    _, st_ = gmres_right(A, None, b, KrylovConfig(restart_dim=200, max_iters=60, rtol=1e-10))
    res = np.asarray(st_.residuals)
    assert np.all(np.diff(res) <= 1e-12 * res[0])


@pytest.mark.parametrize("kw", [{"restart_dim": 0}, {"max_iters": 0}, {"rtol": 0.0}, {"rtol": 1.0}])
def test_krylov_config_validation(kw):
    with pytest.raises(ConfigurationError):
        KrylovConfig(**kw)


# incomplete Cholesky


def test_ic_exact_for_diagonal():
    d = np.array([1.0, 2.0, 4.0, 8.0])
    P = ic_factor(sp.diags(d))
    r = np.array([1.0, -1.0, 2.0, 3.0])
    assert np.allclose(P @ r, r / d, rtol=0, atol=1e-15)


def test_ic_tridiagonal_equals_cholesky():
    A = sp.diags([-np.ones(3), 2 * np.ones(4), -np.ones(3)], [-1, 0, 1], format="csr")
    P = ic_factor(A)
    L = np.linalg.cholesky(A.toarray())
    assert P.shift == 0.0
    assert np.allclose(P.L.toarray(), L, atol=1e-14)
    b = np.arange(1.0, 5.0)
    assert np.allclose(P @ b, np.linalg.solve(A.toarray(), b), atol=1e-13)


def test_ic_rejects_nonpositive_diagonal():
    with pytest.raises(NumericalError):
        ic_factor(sp.diags([1.0, 0.0, 1.0]))


def test_ic_shift_fallback_schedule():
    # 1 - 1.05**2 < 0 unshifted; 1e-3 and 1e-2 shifts still break down, 1e-1 succeeds
    P = ic_factor(sp.csr_matrix(np.array([[1.0, 1.05], [1.05, 1.0]])))
    assert P.shift == pytest.approx(0.1)


def test_ic_shift_schedule_exhausted_raises():
    with pytest.raises(NumericalError):
        ic_factor(sp.csr_matrix(np.array([[1.0, 2.0], [2.0, 1.0]])))


def test_ic_pcg_on_p3_block():
    K = _laplacian(3)
    M = assemble_mass(build_uniform_mesh(3))
    A = (K + M).tocsr()
    b = np.random.default_rng(7).standard_normal(A.shape[0])
    x, st_ = pcg(A, b, ic_factor(A), rtol=1e-10)
    assert st_.converged and st_.iterations <= A.shape[0]
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)


# aggregation AMG


def test_amg_single_level_is_smoother_only():
    A = (_laplacian(3) + sp.identity(81)).tocsr()
    amg = amg_hierarchy(A, max_levels=1)
    assert amg.n_levels == 1
    b = np.random.default_rng(8).standard_normal(81)
    dinv = 1.0 / A.diagonal()
    x = np.zeros(81)
    for _ in range(amg.sweeps):
        x = x + amg.omega * dinv * (b - A @ x)
    assert np.allclose(amg @ b, x, rtol=0, atol=1e-14)


def test_aggregate_count_p4():
    A = _laplacian(4)
    agg, count = standard_aggregation(A)
    n = A.shape[0]
    assert count <= math.ceil(n / 2)
    assert np.all(agg >= 0)
    assert set(np.unique(agg)) == set(range(count))


def test_amg_galerkin_coarse_operators():
    A = (_laplacian(5) + sp.identity(1089)).tocsr()
    amg = AggregationAMG(A)
    assert amg.n_levels >= 2
    for fine, coarse in zip(amg.levels[:-1], amg.levels[1:]):
        P = fine["P"]
        ref = (P.T @ fine["A"] @ P).toarray()
        assert np.abs(coarse["A"].toarray() - ref).max() <= 1e-12 * np.abs(ref).max()
        assert np.all(np.diff(P.tocsc().indptr) > 0)


def test_amg_pcg_iteration_bound_p5():
    A = (_laplacian(5) + sp.identity(1089)).tocsr()
    b = np.random.default_rng(9).standard_normal(1089)
    x, st_ = pcg(A, b, amg_hierarchy(A), rtol=1e-8)
    assert st_.converged
    assert st_.iterations <= 30


def test_amg_vcycle_is_linear():
    A = (_laplacian(4) + sp.identity(289)).tocsr()
    amg = amg_hierarchy(A)
    rng = np.random.default_rng(10)
    for _ in range(5):
        x, y = rng.standard_normal((2, 289))
        a, b = rng.standard_normal(2)
        lhs = amg @ (a * x + b * y)
        rhs = a * (amg @ x) + b * (amg @ y)
        scale = abs(a) * np.linalg.norm(amg @ x) + abs(b) * np.linalg.norm(amg @ y)
        assert np.linalg.norm(lhs - rhs) <= 1e-12 * scale


# Sherman-Morrison


def test_smw_3x3_dense():
    D = np.diag([1.0, 2.0, 3.0])
    u = np.ones(3)
    rhs = np.array([1.0, 0.0, 0.0])
    x = smw_solve(lambda v: v / np.diag(D), u, rhs)
    ref = np.linalg.inv(D + np.outer(u, u)) @ rhs
    assert np.abs(x - ref).max() <= 1e-14


def test_smw_zero_vector_is_base_solve():
    base = lambda v: 2.0 * v  # noqa: E731
    rhs = np.array([1.0, -3.0, 0.5])
    assert np.array_equal(smw_solve(base, np.zeros(3), rhs), base(rhs))


def test_smw_non_spd_raises():
    with pytest.raises(NumericalError):
        ShermanMorrisonSolver(lambda v: -v, np.ones(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_smw_random_spd(seed):
    rng = np.random.default_rng(seed)
    S = _spd(rng, 5)
    u = rng.standard_normal(5)
    rhs = rng.standard_normal(5)
    x = smw_solve(lambda v: np.linalg.solve(S, v), u, rhs)
    ref = np.linalg.solve(S + np.outer(u, u), rhs)
    assert np.linalg.norm(x - ref) <= 1e-12 * np.linalg.norm(ref)


def test_smw_residual_on_truncated_p3_block():
    mesh = build_uniform_mesh(3)
    K = _laplacian(3).tolil()
    # truncate a corner block: identity rows/cols on a few nodes
    active = np.arange(0, 81, 7)
    for i in active:
        K[i, :] = 0.0
        K[:, i] = 0.0
        K[i, i] = 1.0
    K = K.tocsr()
    m = assemble_mass(mesh) @ np.ones(81)
    u = m.copy()
    u[active] = 0.0
    tol = 1e-10
    base = lambda v: pcg(K, v, amg_hierarchy(K), rtol=tol * 1e-2)[0]  # noqa: E731
    rhs = np.random.default_rng(11).standard_normal(81)
    x = smw_solve(base, u, rhs)
    assert np.linalg.norm(RankOneMatrix(K, u) @ x - rhs) / np.linalg.norm(rhs) <= tol


def test_rank_one_matrix_matches_dense():
    rng = np.random.default_rng(12)
    S = sp.random(6, 6, density=0.5, random_state=1)
    S = (S + S.T).tocsr()
    u = rng.standard_normal(6)
    R = RankOneMatrix(S, u)
    x = rng.standard_normal(6)
    assert np.allclose(R @ x, R.toarray() @ x, atol=1e-14)
    assert np.allclose(R.diagonal(), np.diag(R.toarray()))
    P = sp.csr_matrix(np.kron(np.eye(3), np.ones((2, 1))))
    assert np.allclose(R.galerkin(P).toarray(), P.T @ R.toarray() @ P, atol=1e-13)
