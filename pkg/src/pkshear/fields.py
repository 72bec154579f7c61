"""Scalar/vector spectral fields, mode projections, derivatives, and norms.

A `SpectralField` owns one coefficient array on a `Grid` at some frame shear.
Operations treat fields as immutable values and return new fields.  The zero
mode of a field is its average over the two periodic directions (the k1 = k3
= 0 column); the non-zero mode is the complement, further split by whether
q = k1 + k3 vanishes (such modes never feel the shear).

L² quantities are computed spectrally via Parseval.  L¹, L⁴ and L∞ are
collocation quadratures on a 3/2 zero-padded grid, since those norms feed
acceptance thresholds and the padding suppresses quadrature aliasing.  They
are evaluated on the frame grid, which samples the lab field at sheared
locations: the shear map is volume preserving and maps the box to itself, so
the quadrature equals the lab-frame one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .grid import Grid, get_fft_workers

__all__ = [
    "SpectralField",
    "VectorField",
    "FlowState",
    "project_zero_mode",
    "project_nonzero",
    "classify_nonzero_by_q",
    "derivative",
    "gradient",
    "lp_norm",
    "l2_norm",
    "sobolev_norm",
    "linf_norm",
    "min_value",
    "pointwise_product",
    "shear_remap",
]


@dataclass
class SpectralField:
    """One real scalar field as complex Fourier coefficients.

    ``coeffs[k1, m, k3]`` are the series coefficients at frame shear
    ``frame_shear`` (see grid module docstring for the phase convention).
    Hermitian symmetry holds whenever the field came from real data and is
    preserved by every operation here.
    """

    grid: Grid
    coeffs: np.ndarray
    frame_shear: float = 0.0

    @classmethod
    def zeros(cls, grid: Grid, frame_shear: float = 0.0) -> "SpectralField":
        return cls(grid, np.zeros(grid.spec.shape, dtype=np.complex128), frame_shear)

    @classmethod
    def from_values(cls, grid: Grid, values: np.ndarray, frame_shear: float = 0.0) -> "SpectralField":
        return cls(grid, grid.forward(values), frame_shear)

    def values(self) -> np.ndarray:
        """Real values on the (frame-coordinate) collocation grid."""
        return self.grid.inverse(self.coeffs)

    def lab_values(self) -> np.ndarray:
        """Real values on the uniform lab grid.

        `values` samples the lab field at sheared locations (frame grid);
        this undoes the tilt exactly: inverse transform in y, multiply by
        the per-(k1,k3) phase exp(-i q σ y) on the y line, then inverse in
        x and z.
        """
        g = self.grid
        if self.frame_shear == 0.0:
            return self.values()
        partial = g.inverse_y(self.coeffs)
        ny = g.spec.Ny
        phase = np.exp(-1j * g.q * self.frame_shear * g.y.reshape(1, ny, 1))
        partial = partial * phase
        nxz = g.spec.Nx * g.spec.Nz
        return scipy.fft.ifftn(partial * nxz, axes=(0, 2), workers=get_fft_workers()).real

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy(), self.frame_shear)

    def mean(self) -> float:
        """Spatial average (the k = 0 coefficient)."""
        return float(self.coeffs[0, 0, 0].real)

    def _check_compatible(self, other: "SpectralField") -> None:
        if other.grid is not self.grid and other.grid.spec != self.grid.spec:
            raise ValueError("fields live on different grids")
        if abs(other.frame_shear - self.frame_shear) > 1e-9 * (1.0 + abs(self.frame_shear)):
            raise ValueError(
                f"frame mismatch: {self.frame_shear} vs {other.frame_shear}"
            )

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs, self.frame_shear)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_compatible(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs, self.frame_shear)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * scalar, self.frame_shear)

    __rmul__ = __mul__


@dataclass
class VectorField:
    """Three scalar components sharing one grid and frame."""

    components: tuple[SpectralField, SpectralField, SpectralField]

    def __post_init__(self):
        u1 = self.components[0]
        for c in self.components[1:]:
            u1._check_compatible(c)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i: int) -> SpectralField:
        return self.components[i]

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def frame_shear(self) -> float:
        return self.components[0].frame_shear


@dataclass
class FlowState:
    """Cell density, velocity perturbation, rescaled time, and frame shear."""

    n: SpectralField
    u1: SpectralField
    u2: SpectralField
    u3: SpectralField
    t: float = 0.0

    def __post_init__(self):
        for f in (self.u1, self.u2, self.u3):
            self.n._check_compatible(f)

    @property
    def grid(self) -> Grid:
        return self.n.grid

    @property
    def frame_shear(self) -> float:
        return self.n.frame_shear

    def velocity(self) -> VectorField:
        return VectorField((self.u1, self.u2, self.u3))

    def fields(self) -> tuple[SpectralField, ...]:
        return (self.n, self.u1, self.u2, self.u3)

    def copy(self) -> "FlowState":
        return FlowState(self.n.copy(), self.u1.copy(), self.u2.copy(), self.u3.copy(), self.t)

    def mass(self) -> float:
        """Integral of n over the box (equals ||n||_L1 for nonnegative n)."""
        return self.n.mean() * self.grid.volume

    def divergence_rel(self) -> float:
        """||div u|| / ||grad u||, both spectral; 0 for u = 0."""
        g = self.grid
        sigma = self.frame_shear
        eta = g.eta_eff(sigma)
        div = (
            1j * g.k1 * self.u1.coeffs
            + 1j * eta * self.u2.coeffs
            + 1j * g.k3 * self.u3.coeffs
        )
        div_sq = float(np.sum(np.abs(div) ** 2))
        ksq = g.ksq_eff(sigma)
        grad_sq = float(
            np.sum(ksq * (np.abs(self.u1.coeffs) ** 2
                          + np.abs(self.u2.coeffs) ** 2
                          + np.abs(self.u3.coeffs) ** 2))
        )
        if grad_sq == 0.0:
            return 0.0
        return np.sqrt(div_sq / grad_sq)


# -- projections -----------------------------------------------------------


def project_zero_mode(f: SpectralField) -> SpectralField:
    """Keep only the k1 = k3 = 0 coefficients (the x,z average)."""
    out = np.zeros_like(f.coeffs)
    out[0, :, 0] = f.coeffs[0, :, 0]
    return SpectralField(f.grid, out, f.frame_shear)


def project_nonzero(f: SpectralField) -> SpectralField:
    """Complement of the zero-mode projection; P0 f + Pneq f = f exactly."""
    out = f.coeffs.copy()
    out[0, :, 0] = 0.0
    return SpectralField(f.grid, out, f.frame_shear)


def classify_nonzero_by_q(f: SpectralField) -> tuple[SpectralField, SpectralField]:
    """Split the non-zero mode into sheared (q != 0) and unsheared (q = 0) parts.

    Modes with k1 + k3 = 0 but (k1, k3) != (0, 0) ride the shear without
    tilting, so they only ever see plain diffusion.  Returns (f_qnz, f_qz).
    """
    g = f.grid
    qnz = np.where(g.q != 0, f.coeffs, 0.0)
    qz = np.where(g.q == 0, f.coeffs, 0.0)
    qz[0, :, 0] = 0.0  # q = 0 class excludes the zero mode itself
    return (
        SpectralField(g, qnz, f.frame_shear),
        SpectralField(g, qz, f.frame_shear),
    )


# -- derivatives -----------------------------------------------------------


def derivative(f: SpectralField, axis: int, order: int = 1) -> SpectralField:
    """Exact spectral derivative along axis 0(x), 1(y), 2(z).

    In the sheared frame the y derivative is the lab ∂y, i.e. multiplication
    by i(η - q·σ) per slot (chain rule of the frame change).
    """
    if order not in (1, 2):
        raise ValueError(f"derivative order must be 1 or 2, got {order}")
    g = f.grid
    if axis == 0:
        k = g.k1
    elif axis == 1:
        k = g.eta_eff(f.frame_shear)
    elif axis == 2:
        k = g.k3
    else:
        raise ValueError(f"axis must be 0, 1, or 2, got {axis}")
    symbol = (1j * k) ** order
    return SpectralField(g, f.coeffs * symbol, f.frame_shear)


def gradient(f: SpectralField) -> VectorField:
    return VectorField(tuple(derivative(f, ax) for ax in range(3)))


def laplacian(f: SpectralField) -> SpectralField:
    g = f.grid
    return SpectralField(g, -g.ksq_eff(f.frame_shear) * f.coeffs, f.frame_shear)


# -- norms -----------------------------------------------------------------


def l2_norm(f: SpectralField) -> float:
    """Spectral L² norm: sqrt(V · Σ|c|²)."""
    return float(np.sqrt(f.grid.volume * np.sum(np.abs(f.coeffs) ** 2)))


def grad_l2_norm(f: SpectralField) -> float:
    g = f.grid
    ksq = g.ksq_eff(f.frame_shear)
    return float(np.sqrt(g.volume * np.sum(ksq * np.abs(f.coeffs) ** 2)))


def sobolev_norm(f: SpectralField, k: int) -> float:
    """Equivalent H^k norm sqrt(V · Σ (1+|k|²)^k |c|²), k in {1, 2}."""
    if k not in (1, 2):
        raise ValueError(f"sobolev order must be 1 or 2, got {k}")
    g = f.grid
    w = (1.0 + g.ksq_eff(f.frame_shear)) ** k
    return float(np.sqrt(g.volume * np.sum(w * np.abs(f.coeffs) ** 2)))


def lp_norm(f: SpectralField, p) -> float:
    """L^p norm for p in {1, 2, 4, inf}; p != 2 by padded-grid quadrature."""
    if p == 2:
        return l2_norm(f)
    if p == np.inf or p == "inf":
        return linf_norm(f)
    if p not in (1, 4):
        raise ValueError(f"unsupported p = {p}; use 1, 2, 4 or inf")
    vals, npad = f.grid.inverse_padded(f.coeffs)
    cell = f.grid.volume / npad
    return float((np.sum(np.abs(vals) ** p) * cell) ** (1.0 / p))


def linf_norm(f: SpectralField) -> float:
    vals, _ = f.grid.inverse_padded(f.coeffs)
    return float(np.max(np.abs(vals)))


def min_value(f: SpectralField) -> float:
    """Minimum over the collocation grid (no subgrid minimisation)."""
    return float(np.min(f.values()))


# -- products and the frame remap -------------------------------------------


def pointwise_product(f: SpectralField, g: SpectralField,
                      loss_accumulator: list | None = None) -> SpectralField:
    """Pseudo-spectral product with the 2/3 mask applied to the result.

    If loss_accumulator is given, the energy removed by the mask is appended
    to it (the per-step dealias loss in reports sums these).
    """
    f._check_compatible(g)
    grid = f.grid
    vals = grid.inverse(f.coeffs) * grid.inverse(g.coeffs)
    coeffs = grid.forward(vals)
    if loss_accumulator is not None:
        removed = coeffs[~grid.dealias_mask]
        loss_accumulator.append(float(np.sum(np.abs(removed) ** 2)) * grid.volume)
    coeffs = np.where(grid.dealias_mask, coeffs, 0.0)
    return SpectralField(grid, coeffs, f.frame_shear)


def apply_dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, np.where(f.grid.dealias_mask, f.coeffs, 0.0), f.frame_shear)


def shear_remap(f: SpectralField, s: float) -> tuple[SpectralField, float]:
    """Re-express f in a frame advanced by s (slot η moves to η + q·s).

    The physical field is unchanged except that slots pushed outside the
    resolved band are dropped; the discarded energy is returned so callers
    can keep a running loss counter.  s must be a multiple of 2π/Ly.
    """
    coeffs, loss = f.grid.remap_slots(f.coeffs, s)
    return SpectralField(f.grid, coeffs, f.frame_shear + s), loss
