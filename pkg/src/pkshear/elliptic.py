"""Constant-coefficient elliptic solves: chemoattractant, pressure, projection.

All four operators are Fourier multipliers built from the effective (lab)
wavevector k = (k1, η - q·σ, k3), so they are valid at any frame shear.  They
are pure functions and reentrant.
"""

from __future__ import annotations

import numpy as np

from .errors import IllPosedError
from .fields import (
    FlowState,
    SpectralField,
    VectorField,
    derivative,
    pointwise_product,
)

__all__ = [
    "solve_chemo",
    "solve_poisson_meanzero",
    "leray_project",
    "pressure_components",
]


def solve_chemo(n: SpectralField) -> SpectralField:
    """Chemoattractant from cell density: (1 - Δ)c = n, i.e. ĉ = n̂/(1+|k|²).

    Strictly positive-definite, so the k = 0 mode is kept (ĉ₀ = n̂₀);
    no gauge is needed.
    """
    g = n.grid
    sym = 1.0 + g.ksq_eff(n.frame_shear)
    return SpectralField(g, n.coeffs / sym, n.frame_shear)


def solve_poisson_meanzero(rhs: SpectralField) -> SpectralField:
    """Solve Δp = rhs with zero-mean rhs; returns the zero-mean solution."""
    g = rhs.grid
    rms = np.sqrt(np.sum(np.abs(rhs.coeffs) ** 2))
    mean = abs(rhs.coeffs[0, 0, 0])
    if mean > 1e-10 * max(rms, 1e-300):
        raise IllPosedError(
            f"poisson right side has nonzero mean {mean:.3e} (rms {rms:.3e})"
        )
    ksq = g.ksq_eff(rhs.frame_shear)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(ksq > 0, -rhs.coeffs / np.where(ksq > 0, ksq, 1.0), 0.0)
    out[0, 0, 0] = 0.0
    return SpectralField(g, out, rhs.frame_shear)


def leray_project(v: VectorField) -> VectorField:
    """Project onto divergence-free fields: v̂ - k (k·v̂)/|k|², k = 0 untouched."""
    g = v.grid
    sigma = v.frame_shear
    k = (g.k1, g.eta_eff(sigma), g.k3)
    ksq = g.ksq_eff(sigma)
    kdotv = sum(ki * vi.coeffs for ki, vi in zip(k, v))
    inv = np.where(ksq > 0, 1.0 / np.where(ksq > 0, ksq, 1.0), 0.0)
    factor = kdotv * inv
    comps = tuple(
        SpectralField(g, vi.coeffs - ki * factor, sigma) for ki, vi in zip(k, v)
    )
    return VectorField(comps)


def advection_term(u: VectorField, loss_accumulator: list | None = None) -> VectorField:
    """(u·∇)u for divergence-free u, in conservative form Σ_i ∂i(u_i u_j)."""
    g = u.grid
    comps = []
    # symmetric tensor u_i u_j: six distinct products
    prods: dict[tuple[int, int], SpectralField] = {}
    for i in range(3):
        for j in range(i, 3):
            prods[(i, j)] = pointwise_product(u[i], u[j], loss_accumulator)
    for j in range(3):
        acc = None
        for i in range(3):
            tij = prods[(min(i, j), max(i, j))]
            term = derivative(tij, i)
            acc = term if acc is None else acc + term
        comps.append(acc)
    return VectorField(tuple(comps))


def pressure_components(state: FlowState, A: float) -> tuple[SpectralField, SpectralField, SpectralField]:
    """The three pressure pieces of the momentum balance (original time units).

    Δp1 = -2A (∂x u2 + ∂z u2)   shear-perturbation coupling
    Δp2 = ∂y n                   buoyancy
    Δp3 = -div(u·∇u)             advection

    Every right side has zero mean (derivatives/divergences), so each solve
    is well posed with the zero-mean gauge.
    """
    u2 = state.u2
    rhs1 = -2.0 * A * (derivative(u2, 0) + derivative(u2, 2))
    p1 = solve_poisson_meanzero(rhs1)

    p2 = solve_poisson_meanzero(derivative(state.n, 1))

    adv = advection_term(state.velocity())
    div_adv = None
    for i in range(3):
        term = derivative(adv[i], i)
        div_adv = term if div_adv is None else div_adv + term
    p3 = solve_poisson_meanzero(-1.0 * div_adv)
    return p1, p2, p3
