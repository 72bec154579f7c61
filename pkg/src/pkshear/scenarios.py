"""Scenario orchestration: initial conditions, the run engine, experiments.

Scenarios map one `RunConfig` to files in its output directory:

  full-run       diag.csv, run.json, checkpoints
  linear-decay   rates.csv, run.json (per-A decay rates + oracle agreement)
  twod-critical  twod_mass<i>.csv per mass, twod_verdicts.csv, run.json
  sweep-A        sweep.csv (verdict table with threshold interval), run.json,
                 per-A diagnostics sweep_A<value>.csv
  check-lemmas   lemmas.txt, lemma_constants.csv
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .errors import BlowupSuspected, ConfigurationError
from .grid import Grid, make_grid
from .fields import (
    FlowState,
    SpectralField,
    VectorField,
    l2_norm,
    linf_norm,
    project_nonzero,
    project_zero_mode,
    sobolev_norm,
)
from .elliptic import leray_project
from .dynamics import Params, closed_form_linear_solution, step_imex
from .diagnostics import (
    DiagRecord,
    EnergyTracker,
    HypothesisMonitor,
    Verdict,
    collect_record,
    decay_rate_fit,
    lemma_suite,
)
from .storage import read_checkpoint, read_csv, write_checkpoint, write_csv

__all__ = [
    "build_initial_state",
    "simulate",
    "SimOutcome",
    "scenario_full_run",
    "scenario_linear_decay",
    "scenario_2d_critical_mass",
    "scenario_amplitude_sweep",
    "scenario_check_lemmas",
    "run_scenario",
]

# decay rates are fitted over this window, in units of A^(1/3)
LINEAR_FIT_WINDOW = (0.75, 1.75)


# -- initial conditions ---------------------------------------------------------


def _wrapped_gaussian(grid: Grid, center, width: float) -> np.ndarray:
    """Periodic image sum (nearest image) of an isotropic gaussian."""
    x, y, z = np.meshgrid(grid.x, grid.y, grid.z, indexing="ij")
    spans = (2 * np.pi, grid.spec.Ly, 2 * np.pi)
    rsq = np.zeros(grid.spec.shape)
    for coord, c0, span, active in (
        (x, center[0], spans[0], grid.spec.Nx > 1),
        (y, center[1], spans[1], True),
        (z, center[2], spans[2], grid.spec.Nz > 1),
    ):
        if not active:
            continue
        d = np.mod(coord - c0 + span / 2, span) - span / 2
        rsq += d**2
    return np.exp(-rsq / (2.0 * width**2))


def gaussian_blob_density(grid: Grid, center, width: float, mass: float) -> SpectralField:
    """Blob with exact quadrature mass; for collapsed-z grids the mass is the
    per-unit-z (two-dimensional) mass."""
    vals = _wrapped_gaussian(grid, center, width)
    cell = grid.volume / grid.npoints
    integral = float(np.sum(vals)) * cell
    if grid.spec.Nz == 1 or grid.spec.Nx == 1:
        integral /= 2 * np.pi  # collapsed direction contributes its full period
    f = SpectralField.from_values(grid, vals * (mass / integral))
    return SpectralField(grid, np.where(grid.dealias_mask, f.coeffs, 0.0))


def _banded_noise(grid: Grid, seed: int, band, qclass: str = "all",
                  include_zero_column: bool = False) -> SpectralField:
    rng = np.random.default_rng(seed)
    f = SpectralField.from_values(grid, rng.normal(size=grid.spec.shape))
    keep = grid.dealias_mask.copy()
    keep &= np.abs(grid.k1) <= band[0] + 1e-12
    keep &= np.abs(grid.m_index) <= band[1]
    keep &= np.abs(grid.k3) <= band[2] + 1e-12
    if not include_zero_column:
        keep[0, :, 0] = False  # pure fluctuation spectrum
    if qclass == "qzero":
        keep &= grid.q == 0
    elif qclass == "qnonzero":
        keep &= grid.q != 0
    out = np.where(keep, f.coeffs, 0.0)
    out[0, 0, 0] = 0.0  # never a mean offset
    return SpectralField(grid, out)


def build_initial_state(cfg: RunConfig, grid: Grid, A: float) -> FlowState:
    ic = cfg.ic
    if ic.n_shape == "gaussian-blob":
        n = gaussian_blob_density(grid, ic.n_center, ic.n_width, ic.n_mass)
    elif ic.n_shape == "random-band":
        n = _banded_noise(grid, ic.n_seed, ic.n_band, ic.n_qclass)
        norm = l2_norm(n)
        if norm > 0:
            n = (ic.n_amplitude / norm) * n
    else:
        n = SpectralField.zeros(grid)

    if ic.u_shape == "random-band":
        # velocity noise keeps its zero-mode column: the plain shear-profile
        # perturbations u_{1,0}(y), u_{3,0}(y) are part of the data class and
        # are weighted to carry the same H2 budget as the fluctuations, so
        # zero-mode monitors compare growth against a representative scale
        comps = []
        for i in range(3):
            f = _banded_noise(grid, ic.u_seed + 997 * i, ic.u_band,
                              include_zero_column=True)
            comps.append(f)
        zero_h2 = np.sqrt(sum(
            sobolev_norm(project_zero_mode(f), 2) ** 2 for f in comps))
        neq_h2 = np.sqrt(sum(
            sobolev_norm(project_nonzero(f), 2) ** 2 for f in comps))
        if zero_h2 > 0 and neq_h2 > 0:
            boost = neq_h2 / zero_h2
            for f in comps:
                f.coeffs[0, :, 0] *= boost
        u = leray_project(VectorField(tuple(comps)))
        for c in u:
            c.coeffs[0, 0, 0] = 0.0
        h2 = float(np.sqrt(sum(sobolev_norm(c, 2) ** 2 for c in u)))
        if ic.u_scale_c0 is not None:
            target = ic.u_scale_c0 * A ** (-2.0 / 3.0)
        else:
            target = ic.u_amplitude
        scale = target / h2 if h2 > 0 else 0.0
        u = VectorField(tuple(scale * c for c in u))
        return FlowState(n, u[0], u[1], u[2])
    z = SpectralField.zeros(grid)
    return FlowState(n, z, z.copy(), z.copy())


# -- the run engine --------------------------------------------------------------


@dataclass
class SimOutcome:
    verdict: str
    t_final: float
    max_n_linf: float
    records: list[DiagRecord] = field(default_factory=list)
    hypothesis_E_fired: bool = False
    hypothesis_linf_fired: bool = False
    remap_loss_total: float = 0.0
    monitor: HypothesisMonitor | None = None
    state: FlowState | None = None
    blowup_reason: str = ""


def _params_for(cfg: RunConfig, A: float, **flags) -> Params:
    return Params(
        A=A, t_end=cfg.t_end, dt=cfg.dt, dt_min=cfg.dt_min, cfl=cfg.cfl,
        a_weight=cfg.a_weight, blowup_factor=cfg.blowup_factor, **flags,
    )


def simulate(grid: Grid, state: FlowState, params: Params, *,
             sample_every: int = 1,
             checkpoint_every: int = 0,
             checkpoint_dir: str | None = None,
             resume_blob: dict | None = None,
             E1: float | None = None,
             E0_factor: float | None = None,
             track_energy: bool = True) -> SimOutcome:
    """March a state to a verdict, collecting diagnostics records.

    The remap_loss column of the records is the cumulative discarded energy
    (monotone nondecreasing).  With `resume_blob` (from a checkpoint header)
    the accumulators, monitor, and counters continue instead of restarting.
    """
    tracker = EnergyTracker(params.a_weight, params.A) if track_energy else None
    monitor = None
    remap_total = 0.0
    records: list[DiagRecord] = []

    if resume_blob is not None:
        if tracker is not None and resume_blob.get("tracker"):
            tracker.load_state_dict(resume_blob["tracker"])
        mon = resume_blob.get("monitor")
        if mon is not None:
            monitor = HypothesisMonitor(
                E0=mon["E0"], E1=mon["E1"], factor=mon["factor"],
                violation_t_E=mon["violation_t_E"],
                violation_t_linf=mon["violation_t_linf"],
            )
        initial_linf = resume_blob["initial_linf"]
        remap_total = resume_blob.get("remap_loss_total", 0.0)
    else:
        initial_linf = linf_norm(state.n)
        if tracker is not None:
            tracker.sample(state)
            monitor = HypothesisMonitor.from_initial_state(
                state, tracker, E1, budget_factor=E0_factor)
        records.append(collect_record(state, tracker, monitor, params.dt, remap_total))

    def diag_blob() -> dict:
        return {
            "tracker": tracker.state_dict() if tracker is not None else None,
            "monitor": None if monitor is None else {
                "E0": monitor.E0, "E1": monitor.E1, "factor": monitor.factor,
                "violation_t_E": monitor.violation_t_E,
                "violation_t_linf": monitor.violation_t_linf,
            },
            "initial_linf": initial_linf,
            "remap_loss_total": remap_total,
        }

    verdict = Verdict.RUNNING
    reason = ""
    max_linf = initial_linf
    dt_next = params.dt
    steps = 0
    while verdict == Verdict.RUNNING:
        remaining = params.t_end - state.t
        try:
            state, rep = step_imex(state, params, dt=min(dt_next, remaining))
        except BlowupSuspected as exc:
            verdict = Verdict.BLOWUP
            reason = str(exc)
            records.append(collect_record(state, tracker, monitor, dt_next,
                                          remap_total, blowup=True))
            break
        steps += 1
        dt_next = rep.dt_next
        remap_total += rep.remap_loss
        max_linf = max(max_linf, rep.n_max_grid)

        sampled = steps % sample_every == 0
        if rep.n_max_grid > 0.95 * params.blowup_factor * max(initial_linf, 1e-300):
            sampled = True  # confirm potential blow-up with the padded norm
        if state.t >= params.t_end - 1e-12:
            sampled = True
        if sampled:
            records.append(collect_record(state, tracker, monitor, rep.dt, remap_total))
            verdict = _verdict_from(state, params, initial_linf, records[-1])
        if checkpoint_every and checkpoint_dir and steps % checkpoint_every == 0:
            path = os.path.join(checkpoint_dir, f"ckpt_{steps:08d}.bin")
            write_checkpoint(state, path, diag_blob())

    if checkpoint_dir:
        write_checkpoint(state, os.path.join(checkpoint_dir, "final.ckpt"), diag_blob())
    return SimOutcome(
        verdict=verdict,
        t_final=state.t,
        max_n_linf=max_linf,
        records=records,
        hypothesis_E_fired=monitor is not None and monitor.violation_t_E is not None,
        hypothesis_linf_fired=monitor is not None and monitor.violation_t_linf is not None,
        remap_loss_total=remap_total,
        monitor=monitor,
        state=state,
        blowup_reason=reason,
    )


def _verdict_from(state, params, initial_linf, last_record: DiagRecord) -> str:
    if initial_linf > 0 and last_record.n_linf > params.blowup_factor * initial_linf:
        return Verdict.BLOWUP
    if state.t >= params.t_end - 1e-12:
        return Verdict.GLOBAL
    return Verdict.RUNNING


def _write_run_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- scenarios -------------------------------------------------------------------


def scenario_full_run(cfg: RunConfig, resume: str | None = None) -> SimOutcome:
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid = make_grid(cfg.grid)
    params = _params_for(cfg, cfg.A)
    csv_path = os.path.join(cfg.output_dir, "diag.csv")

    old_records: list[DiagRecord] = []
    resume_blob = None
    if resume is not None:
        state, resume_blob = read_checkpoint(resume, grid)
        if resume_blob is None:
            raise ConfigurationError(f"checkpoint {resume} carries no diagnostics state")
        if os.path.exists(csv_path):
            old_records = [r for r in read_csv(csv_path) if r.t <= state.t + 1e-12]
    else:
        state = build_initial_state(cfg, grid, cfg.A)

    outcome = simulate(
        grid, state, params,
        sample_every=cfg.sample_every,
        checkpoint_every=cfg.checkpoint_every,
        checkpoint_dir=cfg.output_dir,
        resume_blob=resume_blob,
        E1=cfg.E1,
        E0_factor=cfg.E0_factor,
    )
    outcome.records = old_records + outcome.records
    write_csv(outcome.records, csv_path)
    meta = {
        "scenario": cfg.scenario, "A": cfg.A, "verdict": outcome.verdict,
        "t_final": outcome.t_final, "max_n_linf": outcome.max_n_linf,
        "remap_loss_total": outcome.remap_loss_total,
        "E0": outcome.monitor.E0 if outcome.monitor else None,
        "E1": outcome.monitor.E1 if outcome.monitor else None,
        "hypothesis_E_fired": outcome.hypothesis_E_fired,
        "hypothesis_linf_fired": outcome.hypothesis_linf_fired,
    }
    _write_run_json(os.path.join(cfg.output_dir, "run.json"), meta)
    return outcome


@dataclass
class LinearDecayReport:
    rows: list[dict]
    slope_qnz: float
    csv_path: str


def scenario_linear_decay(cfg: RunConfig) -> LinearDecayReport:
    """Free decay of n under the exact sheared heat flow, per amplitude.

    Measures the exponential rate of the two non-zero-mode classes over the
    window LINEAR_FIT_WINDOW x A^(1/3) and verifies the stepper against the
    closed-form solution at the final time.
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid = make_grid(cfg.grid)
    rows = []
    for A in cfg.A_list:
        t_scale = A ** (1.0 / 3.0)
        t_end = LINEAR_FIT_WINDOW[1] * t_scale
        dt = t_scale / 40.0
        params = Params(
            A=A, t_end=t_end, dt=dt, dt_min=min(dt / 1e6, 1e-8), cfl=cfg.cfl,
            a_weight=cfg.a_weight, fluid=False, chemotaxis=False, linear_only=True,
        )
        state = build_initial_state(cfg, grid, A)
        n0 = state.n.copy()
        outcome = simulate(grid, state, params, sample_every=1, track_energy=True)

        window = (LINEAR_FIT_WINDOW[0] * t_scale, LINEAR_FIT_WINDOW[1] * t_scale)
        series_qnz = [(r.t, r.n_neq_l2_qnz) for r in outcome.records]
        series_qz = [(r.t, r.n_neq_l2_qz) for r in outcome.records]
        lam_qnz = _safe_rate(series_qnz, window)
        lam_qz = _safe_rate(series_qz, window)

        final = outcome.state
        oracle = closed_form_linear_solution(n0, A, final.t,
                                             frame_shear=final.frame_shear)
        rel_err = l2_norm(final.n - oracle) / max(l2_norm(oracle), 1e-300)
        rows.append({
            "A": A, "lambda_qnz": lam_qnz, "lambda_qz": lam_qz,
            "oracle_rel_err": rel_err,
            "remap_loss_total": outcome.remap_loss_total,
        })

    usable = [(r["A"], r["lambda_qnz"]) for r in rows
              if np.isfinite(r["lambda_qnz"]) and r["lambda_qnz"] > 0]
    if len(usable) >= 2:
        logA = np.log([a for a, _ in usable])
        logl = np.log([l for _, l in usable])
        slope = float(np.polyfit(logA, logl, 1)[0])
    else:
        slope = float("nan")

    csv_path = os.path.join(cfg.output_dir, "rates.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("A,lambda_qnz,lambda_qz,oracle_rel_err,remap_loss_total\n")
        for r in rows:
            fh.write(
                f"{r['A']:.17g},{r['lambda_qnz']:.17g},{r['lambda_qz']:.17g},"
                f"{r['oracle_rel_err']:.17g},{r['remap_loss_total']:.17g}\n"
            )
    _write_run_json(os.path.join(cfg.output_dir, "run.json"), {
        "scenario": cfg.scenario, "A_list": list(cfg.A_list),
        "slope_qnz": slope, "rows": rows,
    })
    return LinearDecayReport(rows=rows, slope_qnz=slope, csv_path=csv_path)


def _safe_rate(series, window) -> float:
    try:
        return decay_rate_fit(series, window)
    except ValueError:
        return float("nan")


@dataclass
class TwodReport:
    verdicts: list[tuple[float, str]]
    csv_path: str


def scenario_2d_critical_mass(cfg: RunConfig) -> TwodReport:
    """Blob collapse dichotomy on a collapsed-z grid, no fluid."""
    if cfg.grid.Nz != 1 and cfg.grid.Nx != 1:
        raise ConfigurationError("twod-critical needs Nz=1 or Nx=1")
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid = make_grid(cfg.grid)
    verdicts = []
    for i, mass in enumerate(cfg.masses):
        params = _params_for(cfg, cfg.A, fluid=False)
        if mass == 0:
            n = SpectralField.zeros(grid)
        else:
            n = gaussian_blob_density(grid, cfg.ic.n_center, cfg.ic.n_width, mass)
        z = SpectralField.zeros(grid)
        state = FlowState(n, z, z.copy(), z.copy())
        outcome = simulate(grid, state, params, sample_every=cfg.sample_every,
                           E1=cfg.E1, E0_factor=cfg.E0_factor)
        write_csv(outcome.records,
                  os.path.join(cfg.output_dir, f"twod_mass{i}.csv"))
        verdicts.append((mass, outcome.verdict))

    csv_path = os.path.join(cfg.output_dir, "twod_verdicts.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("mass,verdict\n")
        for mass, v in verdicts:
            fh.write(f"{mass:.17g},{v}\n")
    _write_run_json(os.path.join(cfg.output_dir, "run.json"), {
        "scenario": cfg.scenario,
        "verdicts": [{"mass": m, "verdict": v} for m, v in verdicts],
    })
    return TwodReport(verdicts=verdicts, csv_path=csv_path)


@dataclass
class SweepReport:
    rows: list[dict]
    threshold_low: float | None
    threshold_high: float | None
    nonmonotone: bool
    csv_path: str


def scenario_amplitude_sweep(cfg: RunConfig) -> SweepReport:
    """Verdict-vs-amplitude table for one IC family, u_in scaled by A^(-2/3)."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid = make_grid(cfg.grid)
    rows = []
    for A in sorted(cfg.A_list):
        params = _params_for(cfg, A)
        state = build_initial_state(cfg, grid, A)
        outcome = simulate(grid, state, params, sample_every=cfg.sample_every,
                           E1=cfg.E1, E0_factor=cfg.E0_factor)
        write_csv(outcome.records,
                  os.path.join(cfg.output_dir, f"sweep_A{A:g}.csv"))
        rows.append({
            "A": A,
            "verdict": outcome.verdict,
            "t_final": outcome.t_final,
            "max_n_linf": outcome.max_n_linf,
            "hypothesis_E_fired": outcome.hypothesis_E_fired,
            "hypothesis_linf_fired": outcome.hypothesis_linf_fired,
        })

    blowups = [r["A"] for r in rows if r["verdict"] == Verdict.BLOWUP]
    globals_ = [r["A"] for r in rows if r["verdict"] == Verdict.GLOBAL]
    lo = max(blowups) if blowups else None
    hi = min(globals_) if globals_ else None
    nonmono = lo is not None and hi is not None and hi < lo

    csv_path = os.path.join(cfg.output_dir, "sweep.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("A,verdict,t_final,max_n_linf,hypothesis_E_fired,"
                 "hypothesis_linf_fired,threshold_low,threshold_high,nonmonotone\n")
        for r in rows:
            fh.write(
                f"{r['A']:.17g},{r['verdict']},{r['t_final']:.17g},"
                f"{r['max_n_linf']:.17g},{int(r['hypothesis_E_fired'])},"
                f"{int(r['hypothesis_linf_fired'])},"
                f"{'' if lo is None else format(lo, '.17g')},"
                f"{'' if hi is None else format(hi, '.17g')},{int(nonmono)}\n"
            )
    _write_run_json(os.path.join(cfg.output_dir, "run.json"), {
        "scenario": cfg.scenario, "rows": rows,
        "threshold_low": lo, "threshold_high": hi, "nonmonotone": nonmono,
    })
    return SweepReport(rows=rows, threshold_low=lo, threshold_high=hi,
                       nonmonotone=nonmono, csv_path=csv_path)


def scenario_check_lemmas(cfg: RunConfig):
    os.makedirs(cfg.output_dir, exist_ok=True)
    grid = make_grid(cfg.grid)
    report = lemma_suite(cfg.lemma_seed, grid, trials=cfg.lemma_trials)
    with open(os.path.join(cfg.output_dir, "lemmas.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text() + "\n")
    with open(os.path.join(cfg.output_dir, "lemma_constants.csv"), "w",
              encoding="utf-8") as fh:
        fh.write("name,kind,value,passed\n")
        for name, (ok, resid) in sorted(report.exact.items()):
            fh.write(f"{name},exact,{resid:.17g},{int(ok)}\n")
        for name, c in sorted(report.measured.items()):
            fh.write(f"{name},measured,{c:.17g},1\n")
    return report


def run_scenario(cfg: RunConfig, resume: str | None = None):
    if cfg.scenario == "full-run":
        return scenario_full_run(cfg, resume=resume)
    if resume is not None:
        raise ConfigurationError("--resume is only meaningful for full-run")
    if cfg.scenario == "linear-decay":
        return scenario_linear_decay(cfg)
    if cfg.scenario == "twod-critical":
        return scenario_2d_critical_mass(cfg)
    if cfg.scenario == "sweep-A":
        return scenario_amplitude_sweep(cfg)
    if cfg.scenario == "check-lemmas":
        return scenario_check_lemmas(cfg)
    raise ConfigurationError(f"unhandled scenario {cfg.scenario}")
