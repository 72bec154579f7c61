"""Measurement apparatus: weighted time norms, monitors, and inequality checks.

The X_a norm of a tracked field f is

    ||f||_Xa² = sup_t (w(t)||f||_L2)² + A^(-1/3) ∫ (w(t)||f||_L2)² dt
              + A^(-1) ∫ (w(t)||∇f||_L2)² dt,      w(t) = exp(a A^(-1/3) t),

accumulated sample by sample (trapezoid for the integrals).  The energy
functional E(t) is the weighted sum of ten such norms of non-zero-mode
quantities; the bootstrap monitors flag E(t) > 2 E0 and ||n||_inf > 2 E1.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntFlag
from typing import Sequence

import numpy as np

from .fields import (
    FlowState,
    SpectralField,
    VectorField,
    derivative,
    grad_l2_norm,
    l2_norm,
    linf_norm,
    lp_norm,
    min_value,
    classify_nonzero_by_q,
    project_nonzero,
    project_zero_mode,
    pointwise_product,
)
from .elliptic import solve_chemo, leray_project
from .dynamics import vorticity_omega2, delta_u2

__all__ = [
    "XaAccumulator",
    "update_xa",
    "EnergyTracker",
    "HypothesisMonitor",
    "hypothesis_check",
    "DiagFlags",
    "DiagRecord",
    "Verdict",
    "blowup_check",
    "decay_rate_fit",
    "lemma_suite",
    "LemmaSuiteReport",
]


# -- X_a accumulation ---------------------------------------------------------


@dataclass(frozen=True)
class XaAccumulator:
    """Running sup/integral data for one tracked field."""

    a_weight: float
    A: float
    running_sup: float = 0.0  # sup of (w ||f||)² so far
    int_l2: float = 0.0
    int_grad: float = 0.0
    last_t: float | None = None
    last_wl2sq: float = 0.0
    last_wgradsq: float = 0.0

    def weight(self, t: float) -> float:
        return float(np.exp(self.a_weight * self.A ** (-1.0 / 3.0) * t))

    def value(self) -> float:
        return float(np.sqrt(
            self.running_sup
            + self.A ** (-1.0 / 3.0) * self.int_l2
            + self.int_grad / self.A
        ))


def update_xa(acc: XaAccumulator, t: float, l2: float, grad_l2: float) -> XaAccumulator:
    """Extend the accumulator with a sample of ||f||_L2 and ||∇f||_L2 at t."""
    if acc.last_t is not None and t < acc.last_t:
        raise ValueError(f"time regression: {t} < {acc.last_t}")
    w2 = acc.weight(t) ** 2
    wl2sq = w2 * l2 * l2
    wgradsq = w2 * grad_l2 * grad_l2
    int_l2, int_grad = acc.int_l2, acc.int_grad
    if acc.last_t is not None and t > acc.last_t:
        h = t - acc.last_t
        int_l2 += 0.5 * h * (acc.last_wl2sq + wl2sq)
        int_grad += 0.5 * h * (acc.last_wgradsq + wgradsq)
    return replace(
        acc,
        running_sup=max(acc.running_sup, wl2sq),
        int_l2=int_l2,
        int_grad=int_grad,
        last_t=t,
        last_wl2sq=wl2sq,
        last_wgradsq=wgradsq,
    )


# -- the energy functional ----------------------------------------------------

# (name, weight exponent of A) for the ten tracked non-zero-mode quantities
ENERGY_TERMS: tuple[tuple[str, float], ...] = (
    ("n_neq", 0.0),
    ("lap_u2_neq", 2.0 / 3.0),
    ("omega2_neq", 1.0 / 3.0),
    ("dx_omega2_neq", 1.0 / 3.0),
    ("dz_omega2_neq", 1.0 / 3.0),
    ("dy_omega2_neq", 0.0),
    ("dx_n_neq", 0.0),
    ("dz_n_neq", 0.0),
    ("dxx_n_neq", 0.0),
    ("dzz_n_neq", 0.0),
)


def energy_tracked_fields(state: FlowState) -> dict[str, SpectralField]:
    n_neq = project_nonzero(state.n)
    om = project_nonzero(vorticity_omega2(state))
    return {
        "n_neq": n_neq,
        "lap_u2_neq": project_nonzero(delta_u2(state)),
        "omega2_neq": om,
        "dx_omega2_neq": derivative(om, 0),
        "dz_omega2_neq": derivative(om, 2),
        "dy_omega2_neq": derivative(om, 1),
        "dx_n_neq": derivative(n_neq, 0),
        "dz_n_neq": derivative(n_neq, 2),
        "dxx_n_neq": derivative(n_neq, 0, 2),
        "dzz_n_neq": derivative(n_neq, 2, 2),
    }


class EnergyTracker:
    """Keeps the ten X_a accumulators current and sums them into E(t)."""

    def __init__(self, a_weight: float, A: float):
        self.A = A
        self.accumulators = {
            name: XaAccumulator(a_weight=a_weight, A=A) for name, _ in ENERGY_TERMS
        }

    def sample(self, state: FlowState) -> float:
        """Fold the state into all accumulators; returns E at this time."""
        tracked = energy_tracked_fields(state)
        for name, f in tracked.items():
            acc = self.accumulators[name]
            self.accumulators[name] = update_xa(
                acc, state.t, l2_norm(f), grad_l2_norm(f)
            )
        return self.value()

    def value(self) -> float:
        total = 0.0
        for name, expo in ENERGY_TERMS:
            acc = self.accumulators[name]
            if acc.last_t is None:
                raise ValueError(f"accumulator {name} has no samples yet")
            total += self.A**expo * acc.value()
        return total

    def state_dict(self) -> dict:
        out = {}
        for name, acc in self.accumulators.items():
            out[name] = {
                "a_weight": acc.a_weight, "A": acc.A,
                "running_sup": acc.running_sup, "int_l2": acc.int_l2,
                "int_grad": acc.int_grad, "last_t": acc.last_t,
                "last_wl2sq": acc.last_wl2sq, "last_wgradsq": acc.last_wgradsq,
            }
        return out

    def load_state_dict(self, d: dict) -> None:
        for name, vals in d.items():
            self.accumulators[name] = XaAccumulator(**vals)


def energy_functional_E(state: FlowState, tracker: EnergyTracker) -> float:
    """E(t) from accumulators that must be current at state.t."""
    for name, acc in tracker.accumulators.items():
        if acc.last_t is None or abs(acc.last_t - state.t) > 1e-12 * (1 + abs(state.t)):
            raise ValueError(
                f"accumulator {name} is stale (last_t={acc.last_t}, state.t={state.t})"
            )
    return tracker.value()


# -- bootstrap hypothesis monitors --------------------------------------------


@dataclass
class HypothesisMonitor:
    """Budgets for the working hypotheses E(t) <= 2 E0, ||n||_inf <= 2 E1."""

    E0: float
    E1: float
    factor: float = 2.0
    violation_t_E: float | None = None
    violation_t_linf: float | None = None

    def __post_init__(self):
        if self.E0 <= 0 or self.E1 <= 0:
            raise ValueError("E0 and E1 must be positive")

    # The a-priori budgets are defined through constants the theory does not
    # evaluate (E0 absorbs the time-space estimate's constant, E1 an iteration
    # constant).  The artifact stands in empirical factors: E0 is this
    # multiple of (E(0) + 1), calibrated once on a reference suppressed run
    # where the measured sup_t E(t)/(E(0)+1) is about 4, and held fixed so
    # the monitor still flags data-dependent runaway.
    DEFAULT_BUDGET_FACTOR = 2.5

    @classmethod
    def from_initial_state(cls, state: FlowState, tracker: EnergyTracker,
                           E1: float | None = None,
                           budget_factor: float | None = None) -> "HypothesisMonitor":
        """E0 = budget_factor * (E(0) + 1); E1 defaults to 4x the initial
        density sup-norm."""
        e_at_0 = tracker.value()
        if E1 is None:
            n_linf = linf_norm(state.n)
            E1 = 4.0 * n_linf if n_linf > 0 else 1.0
        if budget_factor is None:
            budget_factor = cls.DEFAULT_BUDGET_FACTOR
        return cls(E0=budget_factor * (e_at_0 + 1.0), E1=E1)


def hypothesis_check(monitor: HypothesisMonitor, E_t: float, n_linf: float,
                     t: float) -> tuple[bool, bool]:
    """Returns (E ok, sup-norm ok); first violation times stick in the monitor."""
    ok_E = E_t <= monitor.factor * monitor.E0
    ok_linf = n_linf <= monitor.factor * monitor.E1
    if not ok_E and monitor.violation_t_E is None:
        monitor.violation_t_E = t
    if not ok_linf and monitor.violation_t_linf is None:
        monitor.violation_t_linf = t
    return ok_E, ok_linf


# -- per-sample record and verdicts --------------------------------------------


class DiagFlags(IntFlag):
    NONE = 0
    BLOWUP = 1
    HYPOTHESIS_E = 2
    HYPOTHESIS_LINF = 4
    NEGATIVITY = 8


DIAG_COLUMNS = (
    "t", "mass", "n_l2", "n_linf", "n0_l2", "n_neq_l2_qnz", "n_neq_l2_qz",
    "omega2_neq_l2", "delta_u2_neq_l2", "u0_linf", "E_t", "div_u_rel",
    "min_n", "remap_loss", "dt", "flags",
)


@dataclass
class DiagRecord:
    t: float
    mass: float
    n_l2: float
    n_linf: float
    n0_l2: float
    n_neq_l2_qnz: float
    n_neq_l2_qz: float
    omega2_neq_l2: float
    delta_u2_neq_l2: float
    u0_linf: float
    E_t: float
    div_u_rel: float
    min_n: float
    remap_loss: float
    dt: float
    flags: int

    def as_row(self) -> list:
        return [getattr(self, c) for c in DIAG_COLUMNS]


def collect_record(state: FlowState, tracker: EnergyTracker | None,
                   monitor: HypothesisMonitor | None,
                   dt: float, remap_loss: float,
                   blowup: bool = False) -> DiagRecord:
    """Measure one diagnostics row from the current state."""
    n = state.n
    n_linf = linf_norm(n)
    qnz, qz = classify_nonzero_by_q(n)
    u0_linf = max(
        linf_norm(project_zero_mode(f)) for f in (state.u1, state.u2, state.u3)
    )
    E_t = tracker.sample(state) if tracker is not None else 0.0
    flags = DiagFlags.NONE
    if monitor is not None:
        ok_E, ok_linf = hypothesis_check(monitor, E_t, n_linf, state.t)
        if not ok_E:
            flags |= DiagFlags.HYPOTHESIS_E
        if not ok_linf:
            flags |= DiagFlags.HYPOTHESIS_LINF
    mn = min_value(n)
    if mn < -1e-6 * max(n_linf, 1e-300):
        flags |= DiagFlags.NEGATIVITY
    if blowup:
        flags |= DiagFlags.BLOWUP
    return DiagRecord(
        t=state.t,
        mass=state.mass(),
        n_l2=l2_norm(n),
        n_linf=n_linf,
        n0_l2=l2_norm(project_zero_mode(n)),
        n_neq_l2_qnz=l2_norm(qnz),
        n_neq_l2_qz=l2_norm(qz),
        omega2_neq_l2=l2_norm(project_nonzero(vorticity_omega2(state))),
        delta_u2_neq_l2=l2_norm(project_nonzero(delta_u2(state))),
        u0_linf=u0_linf,
        E_t=E_t,
        div_u_rel=state.divergence_rel(),
        min_n=mn,
        remap_loss=remap_loss,
        dt=dt,
        flags=int(flags),
    )


class Verdict:
    RUNNING = "RUNNING"
    GLOBAL = "GLOBAL"
    BLOWUP = "BLOWUP"


def blowup_check(state: FlowState, params, initial_linf: float,
                 dt_collapsed: bool = False) -> str:
    """Heuristic run verdict from density growth / step collapse."""
    if dt_collapsed:
        return Verdict.BLOWUP
    if initial_linf > 0 and linf_norm(state.n) > params.blowup_factor * initial_linf:
        return Verdict.BLOWUP
    if state.t >= params.t_end - 1e-12:
        return Verdict.GLOBAL
    return Verdict.RUNNING


# -- decay-rate measurement -----------------------------------------------------


def decay_rate_fit(series: Sequence[tuple[float, float]],
                   window: tuple[float, float] | None = None) -> float:
    """Least-squares exponential rate of a positive time series.

    Fits log(value) = c - λ t over the window and returns λ (positive =
    decaying).  Needs at least 10 samples in the window.
    """
    pts = [(t, v) for t, v in series if window is None or window[0] <= t <= window[1]]
    if len(pts) < 10:
        raise ValueError(f"need >= 10 samples in window, got {len(pts)}")
    t = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if np.any(v <= 0):
        raise ValueError("decay_rate_fit requires positive values")
    slope = np.polyfit(t, np.log(v), 1)[0]
    return float(-slope)


# -- the lemma / inequality suite -------------------------------------------------


@dataclass
class LemmaSuiteReport:
    exact: dict[str, tuple[bool, float]] = field(default_factory=dict)
    measured: dict[str, float] = field(default_factory=dict)

    @property
    def all_exact_pass(self) -> bool:
        return all(ok for ok, _ in self.exact.values())

    def to_text(self) -> str:
        lines = ["exact identities (pass, worst residual):"]
        for name, (ok, resid) in sorted(self.exact.items()):
            lines.append(f"  {'PASS' if ok else 'FAIL'}  {name:40s} {resid:.3e}")
        lines.append("measured constants (max over seeds):")
        for name, c in sorted(self.measured.items()):
            lines.append(f"        {name:40s} C = {c:.6g}")
        return "\n".join(lines)


def _xz_grad_l2(f: SpectralField) -> float:
    return float(np.sqrt(l2_norm(derivative(f, 0)) ** 2 + l2_norm(derivative(f, 2)) ** 2))


def _random_banded(grid, rng, m_band=None) -> SpectralField:
    f = SpectralField.from_values(grid, rng.normal(size=grid.spec.shape))
    keep = grid.dealias_mask
    if m_band is not None:
        keep = keep & (np.abs(grid.m_index) <= m_band)
    return SpectralField(grid, np.where(keep, f.coeffs, 0.0))


def lemma_suite(seed: int, grid, trials: int = 100) -> LemmaSuiteReport:
    """Exact spectral identities plus measured-constant inequalities.

    Exact items must hold to round-off; the measured items have no a-priori
    constant, so the suite records the worst observed ratio and asserts only
    the inequality direction (finite ratio).
    """
    rng = np.random.default_rng(seed)
    rep = LemmaSuiteReport()

    worst = dict.fromkeys(
        ["chemo_symbol_identity", "chemo_dx_commutation", "poincare_nonzero",
         "leray_idempotent", "product_mode_split"], 0.0)
    ratios: dict[str, float] = {}

    def bump(name, value):
        ratios[name] = max(ratios.get(name, 0.0), value)

    for _ in range(trials):
        n = _random_banded(grid, rng)
        c = solve_chemo(n)
        lap_c = SpectralField(grid, -grid.ksq_eff(0.0) * c.coeffs)
        lhs = l2_norm(lap_c) ** 2 + 2 * grad_l2_norm(c) ** 2 + l2_norm(c) ** 2
        nrm = l2_norm(n) ** 2
        worst["chemo_symbol_identity"] = max(
            worst["chemo_symbol_identity"], abs(lhs - nrm) / nrm)

        a = derivative(solve_chemo(n), 0)
        b = solve_chemo(derivative(n, 0))
        worst["chemo_dx_commutation"] = max(
            worst["chemo_dx_commutation"],
            float(np.max(np.abs(a.coeffs - b.coeffs)))
            / max(float(np.max(np.abs(a.coeffs))), 1e-300))

        n_neq = project_nonzero(n)
        c_neq = solve_chemo(n_neq)
        # elliptic bounds with explicit constants (symbol bounds)
        lap_cn = SpectralField(grid, -grid.ksq_eff(0.0) * c_neq.coeffs)
        bump("lemma_dchemo_lap[<=1]", l2_norm(lap_cn) / max(l2_norm(n_neq), 1e-300))
        bump("lemma_dchemo_grad[<=1/sqrt2]",
             grad_l2_norm(c_neq) / max(l2_norm(n_neq), 1e-300) * np.sqrt(2.0))

        # Poincare for non-zero modes: ||f|| <= ||(dx,dz)f|| exactly
        viol = l2_norm(n_neq) - _xz_grad_l2(n_neq)
        worst["poincare_nonzero"] = max(
            worst["poincare_nonzero"], viol / max(l2_norm(n_neq), 1e-300))

        # L-infinity interpolation with measured constant
        denom = _xz_grad_l2(n_neq) ** 0.25 * float(
            np.sqrt(sum(grad_l2_norm(derivative(n_neq, ax)) ** 2 for ax in (0, 2)))
        ) ** 0.75
        if denom > 0:
            bump("lemma_linf_interpolation", linf_norm(n_neq) / denom)

        # zero-mode elliptic constants
        n0 = project_zero_mode(n)
        c0 = solve_chemo(n0)
        dyc0 = derivative(c0, 1)
        dyyc0 = derivative(c0, 1, 2)
        n0_l2 = max(l2_norm(n0), 1e-300)
        bump("lemma_zeromode_h2", (l2_norm(dyyc0) + l2_norm(dyc0)) / n0_l2)
        bump("lemma_zeromode_linf", linf_norm(dyc0) / n0_l2)
        bump("lemma_zeromode_l4", lp_norm(dyc0, 4) / n0_l2)

    # velocity controlled by omega2 and u2 (random solenoidal fields)
    for k in range(trials):
        comps = tuple(_random_banded(grid, rng) for _ in range(3))
        u = leray_project(VectorField(comps))
        from .fields import FlowState as _FS
        st = _FS(SpectralField.zeros(grid), u[0], u[1], u[2])
        om = project_nonzero(vorticity_omega2(st))
        u_neq = [project_nonzero(f) for f in u]
        u2_neq = u_neq[1]
        num1 = float(np.sqrt(sum(_xz_grad_l2(f) ** 2 for f in u_neq)))
        den1 = l2_norm(om) + grad_l2_norm(u2_neq)
        if den1 > 0:
            bump("lemma_velocity_first_order", num1 / den1)
        num2 = float(np.sqrt(sum(
            l2_norm(derivative(f, 0, 2)) ** 2 + l2_norm(derivative(f, 2, 2)) ** 2
            for f in u_neq)))
        lap_u2 = SpectralField(grid, -grid.ksq_eff(0.0) * u2_neq.coeffs)
        den2 = _xz_grad_l2(om) + l2_norm(lap_u2)
        if den2 > 0:
            bump("lemma_velocity_second_order", num2 / den2)

    # nonlinear-term spot checks on concrete fields
    for k in range(trials // 4):
        f = _random_banded(grid, rng)
        h = _random_banded(grid, rng)
        f_neq, h_neq = project_nonzero(f), project_nonzero(h)
        prod = project_nonzero(pointwise_product(f_neq, h_neq))
        den = linf_norm(f_neq) * l2_norm(h_neq)
        if den > 0:
            bump("appendixA_holder_product", l2_norm(prod) / den)

        f0 = project_zero_mode(f)
        dxz_h = derivative(derivative(h_neq, 0), 2)
        prod2 = pointwise_product(f0, dxz_h)
        den2 = linf_norm(f0) * l2_norm(dxz_h)
        if den2 > 0:
            bump("appendixA_zeromode_product", l2_norm(prod2) / den2)

        # (fg)_neq = f0 g_neq + f_neq g0 + (f_neq g_neq)_neq, exactly
        h0 = project_zero_mode(h)
        full = project_nonzero(pointwise_product(f, h))
        split = (pointwise_product(f0, h_neq) + pointwise_product(f_neq, h0)
                 + project_nonzero(pointwise_product(f_neq, h_neq)))
        resid = l2_norm(full - split) / max(l2_norm(full), 1e-300)
        worst["product_mode_split"] = max(worst["product_mode_split"], resid)

    # Leray idempotence
    for k in range(trials):
        comps = tuple(_random_banded(grid, rng) for _ in range(3))
        v = leray_project(VectorField(comps))
        w = leray_project(v)
        scale = max(max(l2_norm(c) for c in v), 1e-300)
        worst["leray_idempotent"] = max(
            worst["leray_idempotent"],
            max(l2_norm(a - b) for a, b in zip(v, w)) / scale)

    tolerances = {
        "chemo_symbol_identity": 1e-12,
        "chemo_dx_commutation": 1e-12,
        "poincare_nonzero": 1e-12,
        "leray_idempotent": 1e-12,
        "product_mode_split": 1e-12,
    }
    for name, resid in worst.items():
        rep.exact[name] = (resid <= tolerances[name], resid)
    # bounded-constant inequalities: direction asserted via explicit constants
    rep.exact["lemma_dchemo_lap_bound"] = (
        ratios["lemma_dchemo_lap[<=1]"] <= 1.0 + 1e-12, ratios["lemma_dchemo_lap[<=1]"])
    rep.exact["lemma_dchemo_grad_bound"] = (
        ratios["lemma_dchemo_grad[<=1/sqrt2]"] <= 1.0 + 1e-12,
        ratios["lemma_dchemo_grad[<=1/sqrt2]"])
    rep.measured = {k: v for k, v in ratios.items() if not k.startswith("lemma_dchemo")}
    return rep
