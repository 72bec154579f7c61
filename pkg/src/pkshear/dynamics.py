"""Time integration of the rescaled chemotaxis-fluid system.

The rescaled equations (time t -> t/A relative to the primitive system) are

    ∂t n + y(∂x+∂z)n - (1/A)Δn = -(1/A)∇·(u n) - (1/A)∇·(n ∇c),
    (1 - Δ)c = n,
    ∂t u + y(∂x+∂z)u + (u2,0,u2)ᵀ - (1/A)Δu + (1/A)u·∇u + (1/A)∇P = (1/A)(0,n,0)ᵀ,
    ∇·u = 0.

Dividing the primitive momentum balance by A puts exactly one factor 1/A on
the diffusion, advection, pressure, and density source, while the shear
transport and the lift (u2,0,u2) stay order one.

Splitting: the stiff, unbounded-coefficient part (shear transport plus
diffusion) is integrated exactly in the co-moving spectral frame, where it is
diagonal per slot; everything bounded (lift, advection, chemotaxis flux,
density source) is advanced with an explicit midpoint step, Strang-composed
between two half propagators.  For the velocity the propagator solves the
*constraint-preserving* linear subsystem (transport + diffusion + the
pressure that keeps ∇·u = 0), which has the per-slot closed form implemented
in `_velocity_propagator_factors`; projecting only at the end of the step
would degrade the splitting to first order.  The lift stays explicit: mixed
with the projection it is no longer diagonal per slot.

The buoyancy source is applied with its box mean removed.  On the truncated
periodic domain a mean force would accelerate the whole fluid, whereas in
the untruncated setting the zero mode of u2 vanishes identically; removing
the mean is the gauge that restores that behaviour (the Leray projection
already cancels the source on every other k1 = k3 = 0 mode).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import BlowupSuspected, ConfigurationError
from .fields import (
    FlowState,
    SpectralField,
    VectorField,
    derivative,
    pointwise_product,
    shear_remap,
)
from .elliptic import advection_term, leray_project, solve_chemo

__all__ = [
    "Params",
    "StepReport",
    "closed_form_linear_solution",
    "linear_propagator",
    "propagate_state_linear",
    "density_rhs",
    "momentum_rhs",
    "step_imex",
    "vorticity_omega2",
    "delta_u2",
    "residual_omega2_equation",
    "residual_delta_u2_equation",
]


@dataclass
class Params:
    """Amplitude, weighting, and stepping controls for one integration."""

    A: float
    t_end: float
    dt: float = 0.1
    dt_min: float = 1e-8
    cfl: float = 0.4
    a_weight: float = 0.1
    blowup_factor: float = 100.0
    n_change_cap: float = 0.10
    fluid: bool = True
    chemotaxis: bool = True
    linear_only: bool = False
    forcing: Optional[Callable] = None  # state -> (dn or None, (du1,du2,du3) or None)

    def __post_init__(self):
        if self.A <= 0:
            raise ConfigurationError(f"A must be positive, got {self.A}")
        if self.a_weight < 0:
            raise ConfigurationError(f"a_weight must be nonnegative, got {self.a_weight}")
        if not (0 < self.dt_min < self.dt):
            raise ConfigurationError(
                f"need 0 < dt_min < dt, got dt_min={self.dt_min}, dt={self.dt}"
            )
        if not 0 < self.cfl < 1:
            raise ConfigurationError(f"cfl must lie in (0,1), got {self.cfl}")
        if self.t_end <= 0:
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if self.blowup_factor <= 1:
            raise ConfigurationError(
                f"blowup_factor must exceed 1, got {self.blowup_factor}"
            )


@dataclass
class StepReport:
    """Controller bookkeeping for one accepted step."""

    dt: float
    cfl_number: float
    dealias_loss: float
    remap_loss: float
    max_n_change: float
    rejected: int = 0
    dt_next: float = 0.0
    n_max_grid: float = 0.0  # collocation sup of |n| after the step


# -- exact linear propagation ------------------------------------------------


def _shear_decay_exponent(grid, sigma0: float, sigma1: float) -> np.ndarray:
    """∫_{σ0}^{σ1} |k(σ)|² dσ with k(σ) = (k1, η - qσ, k3), per slot."""
    eta, q, ksq_xz = grid.eta, grid.q, grid.ksq_xz

    def G(s):
        return eta**2 * s - eta * q * s**2 + q**2 * s**3 / 3.0

    return ksq_xz * (sigma1 - sigma0) + (G(sigma1) - G(sigma0))


def _scalar_propagator_factor(grid, A: float, sigma0: float, dt: float) -> np.ndarray:
    return np.exp(-_shear_decay_exponent(grid, sigma0, sigma0 + dt) / A)


def _velocity_propagator_factors(grid, A: float, sigma0: float, dt: float):
    """Closed-form coefficients of the projected shear-diffusion propagator.

    Solves, per slot, û' = -(|k(σ)|²/A) û + (q û2 / |k(σ)|²) k(σ) over
    σ in [σ0, σ0+dt], the exact evolution of transport + diffusion restricted
    to divergence-free fields.  Returns (D, r, c1, c3) with

        û2 -> D·r·û2,   û_j -> D·(û_j + c_j·û2)  for j = 1, 3.
    """
    sigma1 = sigma0 + dt
    D = np.exp(-_shear_decay_exponent(grid, sigma0, sigma1) / A)
    k2a = grid.eta - grid.q * sigma0
    k2b = grid.eta - grid.q * sigma1
    Ksq = grid.ksq_xz
    norm_a = np.sqrt(Ksq + k2a**2)
    norm_b = np.sqrt(Ksq + k2b**2)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(norm_b > 0, norm_a / np.where(norm_b > 0, norm_b, 1.0), 1.0)
        inv_Ksq = np.where(Ksq > 0, 1.0 / np.where(Ksq > 0, Ksq, 1.0), 0.0)
    shift = (k2a - k2b * r) * inv_Ksq
    c1 = grid.k1 * shift
    c3 = grid.k3 * shift
    return D, r, c1, c3


def closed_form_linear_solution(f0: SpectralField, A: float, t: float,
                                frame_shear: float | None = None) -> SpectralField:
    """Exact solution at time t of ∂t f + y(∂x+∂z)f = (1/A)Δf.

    Method of characteristics per mode: the lab solution is
    f̂(t, k1, η, k3) = f̂0(k1, η+qt, k3) · exp(-(1/A)[(k1²+k3²)t + ∫₀ᵗ(η+qτ)²dτ]).
    Here that is returned in frame storage: same slots as f0, damped by the
    accumulated dissipation along each characteristic, carried at frame shear
    t (or remapped to the requested `frame_shear`, which must differ from t
    by a multiple of 2π/Ly; out-of-band slots are then discarded exactly as
    the stepper discards them).
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    if f0.frame_shear != 0.0:
        raise ValueError("closed form expects initial data in the lab frame")
    g = f0.grid
    decay = np.exp(-_shear_decay_exponent(g, 0.0, t) / A)
    out = SpectralField(g, f0.coeffs * decay, frame_shear=t)
    if frame_shear is not None and frame_shear != t:
        out, _ = shear_remap(out, frame_shear - t)
    return out


def linear_propagator(f: SpectralField, A: float, dt: float) -> SpectralField:
    """Advance one scalar field by the exact shear-diffusion factor."""
    if dt < 0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    factor = _scalar_propagator_factor(f.grid, A, f.frame_shear, dt)
    return SpectralField(f.grid, f.coeffs * factor, f.frame_shear + dt)


def propagate_state_linear(state: FlowState, A: float, dt: float,
                           fluid: bool = True) -> FlowState:
    """Exact linear half/full step on a flow state: scalar on n, projected on u."""
    g = state.grid
    sigma = state.frame_shear
    n = linear_propagator(state.n, A, dt)
    if fluid:
        D, r, c1, c3 = _velocity_propagator_factors(g, A, sigma, dt)
        u2c = state.u2.coeffs
        u1 = SpectralField(g, D * (state.u1.coeffs + c1 * u2c), sigma + dt)
        u2 = SpectralField(g, D * r * u2c, sigma + dt)
        u3 = SpectralField(g, D * (state.u3.coeffs + c3 * u2c), sigma + dt)
    else:
        u1 = SpectralField(g, state.u1.coeffs.copy(), sigma + dt)
        u2 = SpectralField(g, state.u2.coeffs.copy(), sigma + dt)
        u3 = SpectralField(g, state.u3.coeffs.copy(), sigma + dt)
    return FlowState(n, u1, u2, u3, state.t)


# -- explicit right sides -----------------------------------------------------


def density_rhs(state: FlowState, A: float,
                chemotaxis: bool = True, fluid: bool = True,
                loss_accumulator: list | None = None) -> SpectralField:
    """-(1/A)∇·(u n) - (1/A)∇·(n ∇c), conservative pseudo-spectral form.

    The divergence symbol vanishes on the k = 0 slot, so the spectral mean of
    the result is exactly zero: this is the discrete mass-conservation
    mechanism.
    """
    g = state.grid
    sigma = state.frame_shear
    n = state.n
    c = solve_chemo(n) if chemotaxis else None
    flux = []
    for j in range(3):
        parts = None
        if fluid:
            parts = pointwise_product(state.fields()[1 + j], n, loss_accumulator)
        if chemotaxis:
            term = pointwise_product(n, derivative(c, j), loss_accumulator)
            parts = term if parts is None else parts + term
        flux.append(parts)
    if flux[0] is None:
        return SpectralField.zeros(g, sigma)
    out = None
    for j in range(3):
        term = derivative(flux[j], j)
        out = term if out is None else out + term
    return (-1.0 / A) * out


def momentum_rhs(state: FlowState, A: float,
                 loss_accumulator: list | None = None) -> VectorField:
    """Leray-projected non-stiff momentum right side.

    Everything except the exactly-integrated shear transport and diffusion:
    the lift -(u2,0,u2)ᵀ (order one after rescaling), the advection
    -(1/A)u·∇u, and the mean-free density source (1/A)(0,n,0)ᵀ.
    """
    g0 = state.grid
    sigma0 = state.frame_shear
    eta0 = g0.eta_eff(sigma0)
    div_hat = (1j * g0.k1 * state.u1.coeffs + 1j * eta0 * state.u2.coeffs
               + 1j * g0.k3 * state.u3.coeffs)
    div_l2 = np.sqrt(g0.volume * np.sum(np.abs(div_hat) ** 2))
    ksq0 = g0.ksq_eff(sigma0)
    grad_sq = sum(float(np.sum(ksq0 * np.abs(f.coeffs) ** 2))
                  for f in (state.u1, state.u2, state.u3))
    scale = max(np.sqrt(g0.volume * grad_sq),
                np.sqrt(g0.volume * np.sum(np.abs(state.n.coeffs) ** 2)), 1e-30)
    if div_l2 > 1e-8 * scale:
        raise ValueError(
            f"momentum_rhs called on non-solenoidal state: |div u| = {div_l2:.2e} "
            f"against state scale {scale:.2e}"
        )
    adv = advection_term(state.velocity(), loss_accumulator)
    u2 = state.u2
    buoy = state.n.coeffs.copy()
    buoy[0, 0, 0] = 0.0
    g = state.grid
    sigma = state.frame_shear
    raw = VectorField((
        -1.0 * u2 - (1.0 / A) * adv[0],
        SpectralField(g, (1.0 / A) * (buoy - adv[1].coeffs), sigma),
        -1.0 * u2 - (1.0 / A) * adv[2],
    ))
    return leray_project(raw)


def _rhs_with_extras(state: FlowState, params: Params, losses: list):
    """Explicit RHS for (n, u) plus the physical speed maxima for the CFL."""
    g = state.grid
    extras = {"u_max": np.zeros(3), "gradc_max": np.zeros(3)}
    dn = density_rhs(state, params.A, params.chemotaxis, params.fluid, losses)
    du = momentum_rhs(state, params.A, losses) if params.fluid else None
    if params.fluid:
        for j in range(3):
            extras["u_max"][j] = np.max(np.abs(state.fields()[1 + j].values()))
    if params.chemotaxis:
        c = solve_chemo(state.n)
        for j in range(3):
            extras["gradc_max"][j] = np.max(np.abs(derivative(c, j).values()))
    if params.forcing is not None:
        fn, fu = params.forcing(state)
        if fn is not None:
            dn = dn + fn
        if fu is not None and du is not None:
            du = VectorField(tuple(a + b for a, b in zip(du, fu)))
        elif fu is not None:
            du = VectorField(fu)
    return dn, du, extras


def _advance(state: FlowState, dn: SpectralField, du, h: float) -> FlowState:
    n = state.n + h * dn
    if du is None:
        return FlowState(n, state.u1.copy(), state.u2.copy(), state.u3.copy(), state.t)
    return FlowState(n, state.u1 + h * du[0], state.u2 + h * du[1],
                     state.u3 + h * du[2], state.t)


def _remap_if_needed(state: FlowState) -> tuple[FlowState, float]:
    """Re-zero the frame by whole slot quanta once σ reaches 2π/Ly."""
    g = state.grid
    sigma = state.frame_shear
    j = int(np.floor(sigma / g.deta + 1e-12))
    if j < 1:
        return state, 0.0
    s = -j * g.deta
    loss = 0.0
    new_fields = []
    for f in state.fields():
        nf, lf = shear_remap(f, s)
        loss += lf
        new_fields.append(nf)
    return FlowState(*new_fields, state.t), loss


def _grid_spacings(grid) -> np.ndarray:
    nx, ny, nz = grid.spec.shape
    dx = 2 * np.pi / nx if nx > 1 else np.inf
    dy = grid.spec.Ly / ny
    dz = 2 * np.pi / nz if nz > 1 else np.inf
    return np.array([dx, dy, dz])


def step_imex(state: FlowState, params: Params, dt: float | None = None
              ) -> tuple[FlowState, StepReport]:
    """One adaptive Strang step: exact linear half steps around explicit midpoint.

    Controller: the advective CFL uses the rescaled transporting velocity
    (u + ∇c)/A; on top of that the sup norm of n may move at most
    `n_change_cap` relative per step.  Violations halve dt and retry; falling
    below dt_min raises BlowupSuspected with diagnostics attached.
    """
    if dt is None:
        dt = params.dt
    dt = min(dt, params.dt)
    spacing = _grid_spacings(state.grid)
    n_max_before = float(np.max(np.abs(state.n.values())))
    rejected = 0

    while True:
        losses: list = []
        s1 = propagate_state_linear(state, params.A, 0.5 * dt, params.fluid)
        if params.linear_only:
            s2 = s1
            cfl_number = 0.0
        else:
            dn1, du1, extras = _rhs_with_extras(s1, params, losses)
            speeds = (extras["u_max"] + extras["gradc_max"]) / params.A
            cfl_number = dt * float(np.max(speeds / spacing))
            if cfl_number > params.cfl:
                dt_new = 0.5 * dt
                rejected += 1
                if dt_new < params.dt_min:
                    raise BlowupSuspected(
                        "advective CFL forced dt below dt_min",
                        {"t": state.t, "dt": dt_new, "cfl": cfl_number,
                         "n_linf": n_max_before},
                    )
                dt = dt_new
                continue
            mid = _advance(s1, dn1, du1, 0.5 * dt)
            dn2, du2, _ = _rhs_with_extras(mid, params, losses)
            s2 = _advance(s1, dn2, du2, dt)
        s3 = propagate_state_linear(s2, params.A, 0.5 * dt, params.fluid)
        if params.fluid:
            u = leray_project(s3.velocity())
            s3 = FlowState(s3.n, u[0], u[1], u[2], s3.t)

        # the change cap watches the dynamics, not the band-edge truncation:
        # a remap discard is a representation event that no dt can smooth
        n_max_after = float(np.max(np.abs(s3.n.values())))
        if params.linear_only:
            max_change = 0.0
        else:
            max_change = abs(n_max_after - n_max_before) / max(n_max_before, 1e-300)
            if max_change > params.n_change_cap and n_max_before > 0:
                dt_new = 0.5 * dt
                rejected += 1
                if dt_new < params.dt_min:
                    raise BlowupSuspected(
                        "density change cap forced dt below dt_min",
                        {"t": state.t, "dt": dt_new, "n_linf": n_max_before,
                         "n_change": max_change},
                    )
                dt = dt_new
                continue
        s3, remap_loss = _remap_if_needed(s3)

        s3.t = state.t + dt
        report = StepReport(
            dt=dt,
            cfl_number=cfl_number,
            dealias_loss=float(sum(losses)),
            remap_loss=remap_loss,
            max_n_change=max_change,
            rejected=rejected,
            dt_next=min(params.dt, 1.2 * dt),
            n_max_grid=n_max_after,
        )
        return s3, report


# -- derived fields and consistency residuals ---------------------------------


def vorticity_omega2(state: FlowState) -> SpectralField:
    """ω2 = ∂z u1 - ∂x u3."""
    return derivative(state.u1, 2) - derivative(state.u3, 0)


def delta_u2(state: FlowState) -> SpectralField:
    g = state.grid
    return SpectralField(g, -g.ksq_eff(state.frame_shear) * state.u2.coeffs,
                         state.frame_shear)


def _omega2_rhs(state: FlowState, A: float) -> SpectralField:
    adv = advection_term(state.velocity())
    lift = derivative(state.u2, 0) - derivative(state.u2, 2)
    return lift - (1.0 / A) * (derivative(adv[0], 2) - derivative(adv[2], 0))


def _delta_u2_rhs(state: FlowState, A: float) -> SpectralField:
    adv = advection_term(state.velocity())
    dxx_dzz = lambda f: derivative(f, 0, 2) + derivative(f, 2, 2)
    source = dxx_dzz(state.n)
    nonlin = dxx_dzz(adv[1])
    mixed = derivative(derivative(adv[0], 0) + derivative(adv[2], 2), 1)
    return (1.0 / A) * (source - nonlin + mixed)


def _equation_residual(w1: SpectralField, w2: SpectralField,
                       rhs1: SpectralField, rhs2: SpectralField,
                       dt: float, A: float) -> float:
    g = w1.grid
    if abs((w2.frame_shear - w1.frame_shear) - dt) > 1e-12:
        raise ValueError(
            "states must be one un-remapped step apart (frame shears "
            f"{w1.frame_shear} -> {w2.frame_shear}, dt={dt})"
        )
    sigma_mid = 0.5 * (w1.frame_shear + w2.frame_shear)
    wmid = 0.5 * (w1.coeffs + w2.coeffs)
    dw = (w2.coeffs - w1.coeffs) / dt
    resid = dw + (g.ksq_eff(sigma_mid) / A) * wmid - 0.5 * (rhs1.coeffs + rhs2.coeffs)
    return float(np.sqrt(g.volume * np.sum(np.abs(resid) ** 2)))


def residual_omega2_equation(state: FlowState, state2: FlowState,
                             dt: float, A: float) -> float:
    """L² residual of the vorticity balance across one step (frame form).

    In the co-moving frame ∂τ ω̂2 = -(|k(σ)|²/A) ω̂2 + RHS, with RHS the lift
    ∂x u2 - ∂z u2 plus the curled advection; the time derivative is a slot
    difference, the right side a trapezoid average.  O(dt²) + spatial
    truncation for consistent states.
    """
    return _equation_residual(
        vorticity_omega2(state), vorticity_omega2(state2),
        _omega2_rhs(state, A), _omega2_rhs(state2, A), dt, A,
    )


def residual_delta_u2_equation(state: FlowState, state2: FlowState,
                               dt: float, A: float) -> float:
    """Same consistency diagnostic for the Δu2 balance."""
    return _equation_residual(
        delta_u2(state), delta_u2(state2),
        _delta_u2_rhs(state, A), _delta_u2_rhs(state2, A), dt, A,
    )
