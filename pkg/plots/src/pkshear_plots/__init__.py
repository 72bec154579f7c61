"""Figure rendering for the sheared chemotaxis-fluid simulator outputs."""

from .render import plot_energy_timeseries, plot_rate_scaling, plot_sweep_threshold

__all__ = [
    "plot_energy_timeseries",
    "plot_rate_scaling",
    "plot_sweep_threshold",
]

__version__ = "0.1.0"
