"""Periodic grids, spectral transforms, dealiasing, and shear-frame bookkeeping.

Domain: the box T_x × [-Ly/2, Ly/2) × T_z with Lx = Lz = 2π fixed, so k1 and
k3 are integers, while the y wavenumbers are η_m = 2π m / Ly.

A scalar field is stored as complex coefficients ``c[k1, m, k3]`` (shape
Nx × Ny × Nz, FFT index order) together with a frame shear σ.  The physical
field is

    f(x, y, z) = Σ c[k1, m, k3] · exp(i(k1·x + k3·z + (η_m - q·σ)·y)),

with q = k1 + k3.  The tilted phase is what absorbs the transport y(∂x + ∂z):
along its characteristics the lab y-wavenumber of a mode drifts as η - q·t,
so with σ advancing at the same rate as time the slot labels never move and
the linear evolution is diagonal.  `shear_remap` re-expresses a field in a
frame advanced by s, which relabels slot η to η + q·s; slots pushed outside
the resolved band are discarded and the lost energy reported.

Transforms are normalised so coefficients are the series coefficients above:
``forward = fftn(values)/Ntot`` and ``inverse = ifftn(coeffs)*Ntot``.
Parseval then reads Σ|c|² = mean(|values|²).

Everything here is pure and reentrant; transforms of independent arrays may
run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi

# Worker count handed to scipy.fft; set once from the CLI --threads flag.
_fft_workers = 1


def set_fft_workers(n: int) -> None:
    global _fft_workers
    if n < 1:
        raise ConfigurationError(f"fft worker count must be >= 1, got {n}")
    _fft_workers = int(n)


def get_fft_workers() -> int:
    return _fft_workers


@dataclass(frozen=True)
class GridSpec:
    """Collocation counts and domain geometry.

    Nx, Ny, Nz must be even and >= 4, except Nz (or Nx) may be 1 for a run
    collapsed to two dimensions.  Lx = Lz = 2π are fixed; Ly is the width of
    the truncated y-box.
    """

    Nx: int
    Ny: int
    Nz: int
    Ly: float = 8.0 * np.pi
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for name, n in (("Nx", self.Nx), ("Ny", self.Ny), ("Nz", self.Nz)):
            if n == 1 and name in ("Nx", "Nz"):
                continue  # collapsed direction for 2D runs
            if n < 4 or n % 2 != 0:
                raise ConfigurationError(
                    f"{name} must be an even integer >= 4 (or 1 for a collapsed "
                    f"x/z direction), got {n}"
                )
        if not self.Ly > 0:
            raise ConfigurationError(f"Ly must be positive, got {self.Ly}")
        if not 0.0 < self.dealias_fraction <= 1.0:
            raise ConfigurationError(
                f"dealias_fraction must lie in (0, 1], got {self.dealias_fraction}"
            )

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.Nx, self.Ny, self.Nz)

    @property
    def volume(self) -> float:
        return TWO_PI * self.Ly * TWO_PI


def _wavenumbers(n: int, period: float) -> np.ndarray:
    # fftfreq ordering: 0, 1, ..., n/2-1, -n/2, ..., -1 (times 2π/period)
    return TWO_PI * np.fft.fftfreq(n, d=period / n)


class Grid:
    """Wavenumber tables, dealias mask, transforms, and the frame remap."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        nx, ny, nz = spec.shape

        self.x = TWO_PI * np.arange(nx) / nx
        self.y = -0.5 * spec.Ly + spec.Ly * np.arange(ny) / ny
        self.z = TWO_PI * np.arange(nz) / nz

        self.k1 = _wavenumbers(nx, TWO_PI).reshape(nx, 1, 1)
        self.eta = _wavenumbers(ny, spec.Ly).reshape(1, ny, 1)
        self.k3 = _wavenumbers(nz, TWO_PI).reshape(1, 1, nz)
        self.m_index = np.rint(self.eta / self.deta).astype(np.int64)
        # q = k1 + k3 is the symbol of the coupling direction ∂x + ∂z.
        self.q = np.rint(self.k1 + self.k3).astype(np.int64)
        self.ksq_xz = self.k1**2 + self.k3**2

        self.dealias_mask = self._build_dealias_mask()
        # Resolved m band after dealiasing; remap discards beyond it.
        if ny > 1:
            self.m_max = int(np.floor(spec.dealias_fraction * ny / 2))
        else:
            self.m_max = 0
        # The y axis is centered at 0 while the FFT phases run from the first
        # grid point; exp(i η_m Ly/2) = (-1)^m reconciles the two exactly.
        self._ytwiddle = np.where(self.m_index % 2 == 0, 1.0, -1.0)

    @property
    def deta(self) -> float:
        """y-wavenumber spacing 2π/Ly, also the frame-shear remap quantum."""
        return TWO_PI / self.spec.Ly

    @property
    def volume(self) -> float:
        return self.spec.volume

    @property
    def npoints(self) -> int:
        return self.spec.Nx * self.spec.Ny * self.spec.Nz

    def _build_dealias_mask(self) -> np.ndarray:
        frac = self.spec.dealias_fraction
        nx, ny, nz = self.spec.shape
        keep = np.ones(self.spec.shape, dtype=bool)
        if nx > 1:
            keep &= np.abs(self.k1) <= frac * (nx // 2) + 1e-12
        if ny > 1:
            keep &= np.abs(self.m_index) <= frac * (ny // 2) + 1e-12
        if nz > 1:
            keep &= np.abs(self.k3) <= frac * (nz // 2) + 1e-12
        return keep

    # -- effective (lab) wavenumbers at frame shear σ ---------------------

    def eta_eff(self, frame_shear: float) -> np.ndarray:
        """Lab y-wavenumber of every slot when the frame is sheared by σ."""
        if frame_shear == 0.0:
            return np.broadcast_to(self.eta, (self.spec.Nx, self.spec.Ny, self.spec.Nz))
        return self.eta - self.q * frame_shear

    def ksq_eff(self, frame_shear: float) -> np.ndarray:
        """|k|² = k1² + η_eff² + k3² at frame shear σ."""
        return self.ksq_xz + self.eta_eff(frame_shear) ** 2

    # -- transforms --------------------------------------------------------

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Grid values (frame coordinates) to series coefficients."""
        if values.shape != self.spec.shape:
            raise ValueError(
                f"values shape {values.shape} does not match grid {self.spec.shape}"
            )
        return self._ytwiddle * scipy.fft.fftn(values, workers=_fft_workers) / self.npoints

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Series coefficients to real grid values (frame coordinates)."""
        if coeffs.shape != self.spec.shape:
            raise ValueError(
                f"coeffs shape {coeffs.shape} does not match grid {self.spec.shape}"
            )
        return scipy.fft.ifftn(coeffs * self._ytwiddle * self.npoints,
                               workers=_fft_workers).real

    def inverse_y(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse transform along y only: Σ_m c · exp(i η_m y_j)."""
        ny = self.spec.Ny
        return scipy.fft.ifft(coeffs * self._ytwiddle * ny, axis=1, workers=_fft_workers)

    def inverse_padded(self, coeffs: np.ndarray, factor: float = 1.5) -> tuple[np.ndarray, int]:
        """Evaluate on a zero-padded grid (for quadrature of |f|^p, p != 2).

        Returns (values, padded point count).
        """
        shape = []
        for n in self.spec.shape:
            if n == 1:
                shape.append(1)
            else:
                m = int(np.ceil(factor * n))
                shape.append(m + (m % 2))
        padded = _pad_spectrum(coeffs, tuple(shape))
        npad = int(np.prod(shape))
        m_pad = np.rint(np.fft.fftfreq(shape[1]) * shape[1]).astype(np.int64)
        tw = np.where(m_pad % 2 == 0, 1.0, -1.0).reshape(1, shape[1], 1)
        return scipy.fft.ifftn(padded * tw * npad, workers=_fft_workers).real, npad

    # -- shear-frame remap ---------------------------------------------------

    def remap_slots(self, coeffs: np.ndarray, s: float) -> tuple[np.ndarray, float]:
        """Relabel slots for a frame advanced by s: η -> η + q·s.

        s must be an integer multiple of 2π/Ly so every q moves a whole number
        of slots.  Slots pushed beyond the resolved band are discarded; the
        discarded energy Σ|c|² · volume is returned alongside the new array.
        """
        steps = s / self.deta
        j = int(np.rint(steps))
        if abs(steps - j) > 1e-9:
            raise ValueError(
                f"remap shear {s} is not a multiple of the slot quantum 2π/Ly={self.deta}"
            )
        if j == 0:
            return coeffs.copy(), 0.0

        ny = self.spec.Ny
        # Pull form: new[m'] = old[m' - q·j] wherever the source label exists
        # and both labels sit inside the resolved band.
        src_m = self.m_index - self.q * j
        valid = (np.abs(src_m) <= self.m_max) & (np.abs(self.m_index) <= self.m_max)
        src_idx = np.broadcast_to(np.mod(src_m, ny), coeffs.shape)
        out = np.take_along_axis(coeffs, src_idx, axis=1)
        out = np.where(np.broadcast_to(valid, coeffs.shape), out, 0.0)

        energy_before = float(np.sum(np.abs(coeffs) ** 2)) * self.volume
        energy_after = float(np.sum(np.abs(out) ** 2)) * self.volume
        return out, max(energy_before - energy_after, 0.0)


def make_grid(spec: GridSpec) -> Grid:
    """Build coordinate/wavenumber tables and the dealias mask for a spec."""
    return Grid(spec)


def _pad_spectrum(coeffs: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Embed an FFT-ordered spectrum into a larger FFT-ordered array."""
    out = np.zeros(shape, dtype=coeffs.dtype)
    slices_src, slices_dst = [], []
    for n_old, n_new in zip(coeffs.shape, shape):
        if n_old == n_new:
            slices_src.append([slice(0, n_old)])
            slices_dst.append([slice(0, n_old)])
        else:
            half = n_old // 2
            slices_src.append([slice(0, half), slice(half, n_old)])
            slices_dst.append([slice(0, half), slice(n_new - half, n_new)])
    for sx, dx in zip(slices_src[0], slices_dst[0]):
        for sy, dy in zip(slices_src[1], slices_dst[1]):
            for sz, dz in zip(slices_src[2], slices_dst[2]):
                out[dx, dy, dz] = coeffs[sx, sy, sz]
    return out
