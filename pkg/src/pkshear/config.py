"""Run configuration: INI-style text format, validation, serialisation.

Grammar (documented in the README): `key = value` lines grouped under the
sections [run], [grid], [params], [ic], [sweep], [twod].  Numbers may use a
``pi`` suffix (``8pi``, ``0.5pi``); lists are comma separated.  Unknown
sections or keys are errors, not warnings, so typos cannot silently fall
back to defaults.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec

__all__ = ["ICSpec", "RunConfig", "parse_config", "serialize_config", "SCENARIOS"]

SCENARIOS = ("linear-decay", "twod-critical", "sweep-A", "full-run", "check-lemmas")


def _parse_number(text: str) -> float:
    s = text.strip().lower()
    if s.endswith("pi"):
        head = s[:-2].strip()
        factor = 1.0 if head in ("", "+") else (-1.0 if head == "-" else float(head))
        return factor * np.pi
    return float(s)


def _format_number(x: float) -> str:
    return repr(float(x))


def _parse_list(text: str) -> tuple[float, ...]:
    items = [p for p in (s.strip() for s in text.split(",")) if p]
    return tuple(_parse_number(p) for p in items)


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(s.strip()) for s in text.split(",") if s.strip())


@dataclass(frozen=True)
class ICSpec:
    """Initial-condition description for density and velocity."""

    n_shape: str = "gaussian-blob"  # gaussian-blob | random-band | zero
    n_center: tuple[float, float, float] = (np.pi, 0.0, np.pi)
    n_width: float = 1.0
    n_mass: float = 1.0
    n_seed: int = 0
    n_band: tuple[int, int, int] = (2, 2, 2)
    n_amplitude: float = 1.0
    n_qclass: str = "all"  # all | qzero | qnonzero
    u_shape: str = "zero"  # zero | random-band
    u_seed: int = 1
    u_band: tuple[int, int, int] = (2, 2, 2)
    u_amplitude: float = 0.0
    u_scale_c0: float | None = None  # if set: ||u_in||_H2 = c0 * A^(-2/3)

    def __post_init__(self):
        if self.n_shape not in ("gaussian-blob", "random-band", "zero"):
            raise ConfigurationError(f"unknown n_shape {self.n_shape!r}")
        if self.u_shape not in ("zero", "random-band"):
            raise ConfigurationError(f"unknown u_shape {self.u_shape!r}")
        if self.n_qclass not in ("all", "qzero", "qnonzero"):
            raise ConfigurationError(f"unknown n_qclass {self.n_qclass!r}")
        if self.n_shape == "gaussian-blob" and self.n_mass <= 0:
            raise ConfigurationError("gaussian-blob needs n_mass > 0")
        if self.n_width <= 0:
            raise ConfigurationError("n_width must be positive")


@dataclass(frozen=True)
class RunConfig:
    """One experiment: scenario, grid, stepping, initial data, outputs."""

    scenario: str
    grid: GridSpec
    A: float = 1000.0
    a_weight: float = 0.1
    dt: float = 0.1
    dt_min: float = 1e-8
    cfl: float = 0.4
    t_end: float = 30.0
    blowup_factor: float = 100.0
    E1: float | None = None
    E0_factor: float = 2.5
    ic: ICSpec = field(default_factory=ICSpec)
    A_list: tuple[float, ...] = ()
    masses: tuple[float, ...] = ()
    output_dir: str = "out"
    sample_every: int = 1
    checkpoint_every: int = 0
    lemma_seed: int = 2024
    lemma_trials: int = 100

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(
                f"scenario must be one of {SCENARIOS}, got {self.scenario!r}"
            )
        if self.scenario in ("sweep-A", "linear-decay") and not self.A_list:
            raise ConfigurationError(f"scenario {self.scenario} needs a nonempty A_list")
        if self.scenario == "twod-critical" and not self.masses:
            raise ConfigurationError("scenario twod-critical needs a nonempty masses list")
        if self.sample_every < 1:
            raise ConfigurationError("sample_every must be >= 1")
        if self.checkpoint_every < 0:
            raise ConfigurationError("checkpoint_every must be >= 0")


# key -> (parser, serializer, target) tables make unknown keys a lookup failure
_RUN_KEYS = {
    "scenario": str,
    "output_dir": str,
    "sample_every": int,
    "checkpoint_every": int,
    "lemma_seed": int,
    "lemma_trials": int,
}
_GRID_KEYS = {"nx": int, "ny": int, "nz": int, "ly": _parse_number,
              "dealias_fraction": _parse_number}
_PARAMS_KEYS = {"A": _parse_number, "a_weight": _parse_number, "dt": _parse_number,
                "dt_min": _parse_number, "cfl": _parse_number, "t_end": _parse_number,
                "blowup_factor": _parse_number, "E1": _parse_number,
                "E0_factor": _parse_number}
_IC_KEYS = {
    "n_shape": str, "n_center": _parse_list, "n_width": _parse_number,
    "n_mass": _parse_number, "n_seed": int, "n_band": _parse_int_list,
    "n_amplitude": _parse_number, "n_qclass": str,
    "u_shape": str, "u_seed": int, "u_band": _parse_int_list,
    "u_amplitude": _parse_number, "u_scale_c0": _parse_number,
}
_SWEEP_KEYS = {"A_list": _parse_list}
_TWOD_KEYS = {"masses": _parse_list}

_SECTIONS = {
    "run": _RUN_KEYS, "grid": _GRID_KEYS, "params": _PARAMS_KEYS,
    "ic": _IC_KEYS, "sweep": _SWEEP_KEYS, "twod": _TWOD_KEYS,
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate config text; unknown sections/keys are errors."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str  # keep key case (A vs a_weight)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc

    values: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in cp.sections():
        if section not in _SECTIONS:
            raise ConfigurationError(f"unknown config section [{section}]")
        table = _SECTIONS[section]
        for key, raw in cp.items(section):
            if key not in table:
                raise ConfigurationError(f"unknown key {key!r} in section [{section}]")
            try:
                values[section][key] = table[key](raw)
            except (ValueError, TypeError) as exc:
                raise ConfigurationError(
                    f"bad value for {key!r} in [{section}]: {raw!r} ({exc})"
                ) from exc

    g = values["grid"]
    grid = GridSpec(
        Nx=g.get("nx", 64), Ny=g.get("ny", 128), Nz=g.get("nz", 64),
        Ly=g.get("ly", 8 * np.pi),
        dealias_fraction=g.get("dealias_fraction", 2.0 / 3.0),
    )
    icvals = dict(values["ic"])
    if "n_center" in icvals:
        c = icvals["n_center"]
        if len(c) != 3:
            raise ConfigurationError("n_center needs three comma-separated numbers")
        icvals["n_center"] = tuple(float(v) for v in c)
    for band_key in ("n_band", "u_band"):
        if band_key in icvals and len(icvals[band_key]) != 3:
            raise ConfigurationError(f"{band_key} needs three integers")
    ic = ICSpec(**icvals)

    run = values["run"]
    if "scenario" not in run:
        raise ConfigurationError("missing required key 'scenario' in [run]")
    p = values["params"]
    return RunConfig(
        scenario=run["scenario"],
        grid=grid,
        A=p.get("A", 1000.0),
        a_weight=p.get("a_weight", 0.1),
        dt=p.get("dt", 0.1),
        dt_min=p.get("dt_min", 1e-8),
        cfl=p.get("cfl", 0.4),
        t_end=p.get("t_end", 30.0),
        blowup_factor=p.get("blowup_factor", 100.0),
        E1=p.get("E1"),
        E0_factor=p.get("E0_factor", 2.5),
        ic=ic,
        A_list=values["sweep"].get("A_list", ()),
        masses=values["twod"].get("masses", ()),
        output_dir=run.get("output_dir", "out"),
        sample_every=run.get("sample_every", 1),
        checkpoint_every=run.get("checkpoint_every", 0),
        lemma_seed=run.get("lemma_seed", 2024),
        lemma_trials=run.get("lemma_trials", 100),
    )


def serialize_config(cfg: RunConfig) -> str:
    """Emit config text whose parse equals cfg."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["run"] = {
        "scenario": cfg.scenario,
        "output_dir": cfg.output_dir,
        "sample_every": str(cfg.sample_every),
        "checkpoint_every": str(cfg.checkpoint_every),
        "lemma_seed": str(cfg.lemma_seed),
        "lemma_trials": str(cfg.lemma_trials),
    }
    cp["grid"] = {
        "nx": str(cfg.grid.Nx), "ny": str(cfg.grid.Ny), "nz": str(cfg.grid.Nz),
        "ly": _format_number(cfg.grid.Ly),
        "dealias_fraction": _format_number(cfg.grid.dealias_fraction),
    }
    params = {
        "A": _format_number(cfg.A), "a_weight": _format_number(cfg.a_weight),
        "dt": _format_number(cfg.dt), "dt_min": _format_number(cfg.dt_min),
        "cfl": _format_number(cfg.cfl), "t_end": _format_number(cfg.t_end),
        "blowup_factor": _format_number(cfg.blowup_factor),
        "E0_factor": _format_number(cfg.E0_factor),
    }
    if cfg.E1 is not None:
        params["E1"] = _format_number(cfg.E1)
    cp["params"] = params
    ic = cfg.ic
    icd = {
        "n_shape": ic.n_shape,
        "n_center": ",".join(_format_number(v) for v in ic.n_center),
        "n_width": _format_number(ic.n_width),
        "n_mass": _format_number(ic.n_mass),
        "n_seed": str(ic.n_seed),
        "n_band": ",".join(str(v) for v in ic.n_band),
        "n_amplitude": _format_number(ic.n_amplitude),
        "n_qclass": ic.n_qclass,
        "u_shape": ic.u_shape,
        "u_seed": str(ic.u_seed),
        "u_band": ",".join(str(v) for v in ic.u_band),
        "u_amplitude": _format_number(ic.u_amplitude),
    }
    if ic.u_scale_c0 is not None:
        icd["u_scale_c0"] = _format_number(ic.u_scale_c0)
    cp["ic"] = icd
    if cfg.A_list:
        cp["sweep"] = {"A_list": ",".join(_format_number(a) for a in cfg.A_list)}
    if cfg.masses:
        cp["twod"] = {"masses": ",".join(_format_number(m) for m in cfg.masses)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
