"""Reference computations that share no code with the package."""
from __future__ import annotations

import numpy as np
from scipy.optimize import lsq_linear


def p1_element_quadrature(xy):
    """Element stiffness and mass of a P1 triangle from basis coefficients and
    edge-midpoint quadrature (exact for quadratics)."""
    xy = np.asarray(xy, dtype=float)
    V = np.column_stack([np.ones(3), xy])
    coef = np.linalg.inv(V)  # column j: coefficients (a, b, c) of basis j
    area = 0.5 * abs(np.linalg.det(V))
    grads = coef[1:, :].T
    stiff = area * grads @ grads.T
    mids = 0.5 * (xy[[0, 1, 2]] + xy[[1, 2, 0]])
    phi = np.column_stack([np.ones(3), mids]) @ coef  # phi[q, j]
    mass = area / 3.0 * phi.T @ phi
    return stiff, mass


def dense_assembly(coords, elements):
    n = len(coords)
    K = np.zeros((n, n))
    M = np.zeros((n, n))
    for tri in elements:
        ke, me = p1_element_quadrature(coords[tri])
        K[np.ix_(tri, tri)] += ke
        M[np.ix_(tri, tri)] += me
    return K, M


def box_qp(A, b, lower, upper):
    """``argmin 1/2 x^T A x - b^T x`` over a box, via bounded least squares on the
    Cholesky factor (``A = L L^T``)."""
    A = np.asarray(A, dtype=float)
    L = np.linalg.cholesky(A)
    rhs = np.linalg.solve(L, b)
    res = lsq_linear(L.T, rhs, bounds=(lower, upper), method="bvls", tol=1e-15, lsmr_tol=None, max_iter=10_000)
    return res.x


def kkt_violation(A, b, lower, upper, x):
    """Largest violation of the box-QP optimality conditions."""
    g = A @ x - b
    scale = max(1.0, np.max(np.abs(b)))
    viol = 0.0
    viol = max(viol, np.max(lower - x, initial=0.0), np.max(x - upper, initial=0.0))
    at_lo = np.isclose(x, lower, rtol=0, atol=1e-12)
    at_hi = np.isclose(x, upper, rtol=0, atol=1e-12)
    free = ~(at_lo | at_hi)
    viol = max(viol, np.max(np.abs(g[free]), initial=0.0) / scale)
    viol = max(viol, np.max(-g[at_lo & ~at_hi], initial=0.0) / scale)
    viol = max(viol, np.max(g[at_hi & ~at_lo], initial=0.0) / scale)
    return viol


def gauss_seidel_sweep(A, b, x):
    x = np.array(x, dtype=float)
    for i in range(len(x)):
        x[i] += (b[i] - A[i] @ x) / A[i, i]
    return x
