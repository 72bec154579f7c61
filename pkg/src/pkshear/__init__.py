"""Pseudo-spectral chemotaxis-fluid solver near the shear flow (Ay, 0, Ay).

Layered as: grid/fields (spectral substrate), elliptic (chemoattractant,
pressure, projection), dynamics (exact sheared propagators + IMEX stepping),
diagnostics (weighted norms, monitors, lemma checks), scenarios/cli
(experiment orchestration and file I/O).
"""

from .grid import GridSpec, Grid, make_grid, set_fft_workers
from .fields import SpectralField, VectorField, FlowState

__all__ = [
    "GridSpec",
    "Grid",
    "make_grid",
    "set_fft_workers",
    "SpectralField",
    "VectorField",
    "FlowState",
]

__version__ = "0.1.0"
