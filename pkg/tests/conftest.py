"""Shared fixtures and field builders for the test suite."""

import numpy as np
import pytest

from pkshear.grid import GridSpec, make_grid
from pkshear.fields import SpectralField, VectorField, FlowState
from pkshear.elliptic import leray_project


def mesh(grid):
    return np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")


def random_field(grid, seed, m_band=None, kxz_band=None, amplitude=None):
    """Seeded random real field, dealiased, optionally band-limited.

    With `amplitude` given the field is rescaled to that L² norm.
    """
    rng = np.random.default_rng(seed)
    f = SpectralField.from_values(grid, rng.normal(size=grid.spec.shape))
    keep = grid.dealias_mask.copy()
    if m_band is not None:
        keep &= np.abs(grid.m_index) <= m_band
    if kxz_band is not None:
        keep &= (np.abs(grid.k1) <= kxz_band + 1e-12) & (np.abs(grid.k3) <= kxz_band + 1e-12)
    coeffs = np.where(keep, f.coeffs, 0.0)
    if amplitude is not None:
        norm = np.sqrt(grid.volume * np.sum(np.abs(coeffs) ** 2))
        if norm > 0:
            coeffs = coeffs * (amplitude / norm)
    return SpectralField(grid, coeffs)


def random_divfree(grid, seed, m_band=None, kxz_band=None):
    """Random solenoidal velocity with zero means and clean u2 zero mode."""
    comps = []
    for i in range(3):
        comps.append(random_field(grid, seed + 101 * i, m_band, kxz_band))
    v = leray_project(VectorField(tuple(comps)))
    for c in v:
        c.coeffs[0, 0, 0] = 0.0
    return v


def make_state(grid, n=None, u=None, t=0.0):
    z = SpectralField.zeros(grid)
    if n is None:
        n = z.copy()
    if u is None:
        u = (z.copy(), z.copy(), z.copy())
    return FlowState(n, u[0], u[1], u[2], t)


@pytest.fixture(scope="session")
def grid16():
    return make_grid(GridSpec(Nx=16, Ny=32, Nz=16, Ly=4 * np.pi))


@pytest.fixture(scope="session")
def grid_small():
    return make_grid(GridSpec(Nx=8, Ny=16, Nz=8, Ly=2 * np.pi))
