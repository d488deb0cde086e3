"""Initial order parameters: a centred square or circle with a random interface band."""
from __future__ import annotations

import numpy as np

from ..exceptions import ConfigurationError
from ..mesh_fem import build_uniform_mesh

__all__ = ["SHAPES", "HALF_WIDTH", "BAND_HALF_WIDTH", "make_rng", "signed_distance", "gen_initial"]

SHAPES = ("square", "circle")
HALF_WIDTH = 0.25  # square half-width and circle radius
BAND_HALF_WIDTH = 5  # in mesh widths; the band is 10 h wide in total
BAND_LOW, BAND_HIGH = -0.3, 0.5


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based Philox stream, reproducible across platforms."""
    return np.random.Generator(np.random.Philox(int(seed)))


def signed_distance(shape: str, coords) -> np.ndarray:
    """Distance to the interface curve, negative inside."""
    c = np.asarray(coords, dtype=float) - 0.5
    if shape == "square":
        return np.max(np.abs(c), axis=1) - HALF_WIDTH
    if shape == "circle":
        return np.hypot(c[:, 0], c[:, 1]) - HALF_WIDTH
    raise ConfigurationError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def band_mask(shape: str, mesh) -> np.ndarray:
    return np.abs(signed_distance(shape, mesh.coords)) <= BAND_HALF_WIDTH * mesh.h


def gen_initial(shape: str, p: int, seed: int = 0, mesh=None) -> np.ndarray:
    """``+1`` inside, ``-1`` outside, uniform samples in ``[-0.3, 0.5]`` on the band."""
    if shape not in SHAPES:
        raise ConfigurationError(f"unknown shape {shape!r}; expected one of {SHAPES}")
    mesh = mesh if mesh is not None else build_uniform_mesh(p)
    dist = signed_distance(shape, mesh.coords)
    u = np.where(dist < 0.0, 1.0, -1.0)
    band = np.abs(dist) <= BAND_HALF_WIDTH * mesh.h
    u[band] = make_rng(seed).uniform(BAND_LOW, BAND_HIGH, size=int(band.sum()))
    return u
