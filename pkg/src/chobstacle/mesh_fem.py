"""P1 finite elements on the unit square: mesh, stiffness, mass and the
Cahn-Hilliard saddle-point blocks."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.sparse as sp

from .exceptions import AssemblyError, ConfigurationError
from .sparse.rankone import RankOneMatrix

__all__ = [
    "TriangleMesh",
    "SaddleSystem",
    "build_uniform_mesh",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_mean_vector",
    "assemble_system",
    "element_mass_matrix",
    "export_matrix_market",
]


@dataclass(frozen=True)
class TriangleMesh:
    """Structured triangulation of (0,1)^2.

    Nodes are numbered lexicographically by (y, x): node ``j*n_side + i``
    sits at ``(i*h, j*h)``.  Every cell is split along its lower-left to
    upper-right diagonal.
    """

    n_side: int
    coords: np.ndarray
    elements: np.ndarray
    h: float

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.coords[self.elements]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def build_uniform_mesh(p: int) -> TriangleMesh:
    """Uniform mesh with ``2**p`` cells per side (h = 2**-p)."""
    if not isinstance(p, (int, np.integer)) or not 2 <= p <= 12:
        raise ConfigurationError(f"mesh level p must be an integer in [2, 12], got {p!r}")
    ncell = 2**p
    n_side = ncell + 1
    h = 1.0 / ncell
    ii, jj = np.meshgrid(np.arange(n_side), np.arange(n_side))
    coords = np.column_stack([ii.ravel() * h, jj.ravel() * h])

    ci, cj = np.meshgrid(np.arange(ncell), np.arange(ncell))
    ci = ci.ravel()
    cj = cj.ravel()
    n00 = cj * n_side + ci
    n10 = n00 + 1
    n01 = n00 + n_side
    n11 = n01 + 1
    lower = np.column_stack([n00, n10, n11])
    upper = np.column_stack([n00, n11, n01])
    elements = np.empty((2 * ncell * ncell, 3), dtype=np.int64)
    elements[0::2] = lower
    elements[1::2] = upper
    return TriangleMesh(n_side=n_side, coords=coords, elements=elements, h=h)


def _element_geometry(mesh: TriangleMesh):
    areas = mesh.signed_areas()
    if np.any(areas <= 0.0):
        bad = int(np.argmin(areas))
        raise AssemblyError(f"degenerate or clockwise triangle {bad} (area {areas[bad]:.3e})")
    p = mesh.coords[mesh.elements]
    x = p[:, :, 0]
    y = p[:, :, 1]
    # gradients of barycentric coordinates: grad(lambda_i) = (b_i, c_i)
    b = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]])
    c = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]])
    b /= (2.0 * areas)[:, None]
    c /= (2.0 * areas)[:, None]
    return areas, b, c


def _scatter(mesh: TriangleMesh, local: np.ndarray) -> sp.csr_matrix:
    n = mesh.n_nodes
    rows = np.repeat(mesh.elements, 3, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


def assemble_stiffness(mesh: TriangleMesh) -> sp.csr_matrix:
    """Global stiffness matrix with entries (grad l_p, grad l_q)."""
    areas, b, c = _element_geometry(mesh)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) * areas[:, None, None]
    return _scatter(mesh, local)


def element_mass_matrix(area: float) -> np.ndarray:
    return area / 12.0 * (np.ones((3, 3)) + np.eye(3))


def assemble_mass(mesh: TriangleMesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix, element blocks (|T|/12)(1 + delta_ij)."""
    areas, _, _ = _element_geometry(mesh)
    local = areas[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None, :, :]
    return _scatter(mesh, local)


def lumped_mass(M: sp.spmatrix) -> sp.csr_matrix:
    return sp.diags(np.asarray(M.sum(axis=1)).ravel(), format="csr")


def assemble_mean_vector(mesh: TriangleMesh, M: sp.spmatrix | None = None) -> np.ndarray:
    """m_p = integral of the hat function l_p, i.e. the row sums of M."""
    if M is None:
        M = assemble_mass(mesh)
    return np.asarray(M @ np.ones(M.shape[0])).ravel()


@dataclass(frozen=True)
class SaddleSystem:
    """Blocks of the discrete Cahn-Hilliard system.

    ``A = eps*(K + m m^T)`` is kept factored; ``B = M`` and ``C = tau*K``.
    """

    mesh: TriangleMesh
    K: sp.csr_matrix
    M: sp.csr_matrix
    m: np.ndarray
    epsilon: float
    tau: float
    A: RankOneMatrix = field(repr=False)
    C: sp.csr_matrix = field(repr=False)

    @property
    def B(self) -> sp.csr_matrix:
        return self.M

    @property
    def eta(self) -> float:
        return self.tau * self.epsilon

    @property
    def n(self) -> int:
        return self.K.shape[0]


def assemble_system(mesh: TriangleMesh, epsilon: float, tau: float) -> SaddleSystem:
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise ConfigurationError(f"epsilon must be positive, got {epsilon!r}")
    if not (np.isfinite(tau) and tau > 0):
        raise ConfigurationError(f"tau must be positive, got {tau!r}")
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    m = assemble_mean_vector(mesh, M)
    A = RankOneMatrix((epsilon * K).tocsr(), np.sqrt(epsilon) * m)
    C = (tau * K).tocsr()
    return SaddleSystem(mesh=mesh, K=K, M=M, m=m, epsilon=float(epsilon), tau=float(tau), A=A, C=C)


def export_matrix_market(sys_or_mesh, directory) -> dict:
    """Write K.mtx, M.mtx and m.mtx (17 significant digits) into ``directory``."""
    from pathlib import Path

    if isinstance(sys_or_mesh, SaddleSystem):
        K, M, m = sys_or_mesh.K, sys_or_mesh.M, sys_or_mesh.m
    else:
        K = assemble_stiffness(sys_or_mesh)
        M = assemble_mass(sys_or_mesh)
        m = assemble_mean_vector(sys_or_mesh, M)
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"K": out / "K.mtx", "M": out / "M.mtx", "m": out / "m.mtx"}
    scipy.io.mmwrite(str(paths["K"]), K, precision=17, symmetry="general")
    scipy.io.mmwrite(str(paths["M"]), M, precision=17, symmetry="general")
    scipy.io.mmwrite(str(paths["m"]), m.reshape(-1, 1), precision=17)
    return paths
