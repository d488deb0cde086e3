"""Nonsmooth Newton-Schur solvers for the Cahn-Hilliard equation with obstacle potential."""
from .mesh_fem import SaddleSystem, TriangleMesh, assemble_system, build_uniform_mesh
from .nssn_uzawa import NonsmoothNewtonSchur, TimeStepConfig, UzawaState, initial_state

__all__ = [
    "SaddleSystem",
    "TriangleMesh",
    "assemble_system",
    "build_uniform_mesh",
    "NonsmoothNewtonSchur",
    "TimeStepConfig",
    "UzawaState",
    "initial_state",
]
__version__ = "0.1.0"
