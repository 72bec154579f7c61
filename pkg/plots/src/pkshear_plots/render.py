"""The three figure renderers (batch, headless)."""

from __future__ import annotations

import warnings

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .csvio import read_diag, read_rates, read_run_meta, read_sweep

FIG_SIZE = (6.4, 4.2)
REFERENCE_SLOPE = -1.0 / 3.0


def _new_axes(title: str):
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    ax.set_title(title)
    return fig, ax


def plot_energy_timeseries(csv_path: str, out_image: str) -> None:
    """E(t), density sup norm, and mass vs time with the hypothesis bands.

    The 2*E0 and 2*E1 lines come from run.json when present; otherwise they
    are derived from the first row by the producer's conventions
    (E0 = E_t(0) + 1, E1 = 4 * n_linf(0)).  A header-only CSV yields an
    empty-axes figure.
    """
    data = read_diag(csv_path)
    fig, ax = _new_axes("energy and density history")
    ax.set_xlabel("t")
    if data["t"]:
        t = np.asarray(data["t"])
        ax.plot(t, data["E_t"], label="E(t)", color="tab:blue")
        ax.plot(t, data["n_linf"], label=r"sup |n|", color="tab:red")
        ax.plot(t, data["mass"], label="mass", color="tab:green", ls=":")
        meta = read_run_meta(csv_path)
        if meta and meta.get("E0") is not None:
            e0, e1 = meta["E0"], meta["E1"]
        else:
            e0 = data["E_t"][0] + 1.0
            e1 = 4.0 * data["n_linf"][0]
        ax.axhline(2 * e0, color="tab:blue", ls="--", lw=1, label="2 E0")
        ax.axhline(2 * e1, color="tab:red", ls="--", lw=1, label="2 E1")
        if min(data["E_t"]) > 0:
            ax.set_yscale("log")
        ax.legend(loc="best", fontsize=8)
    fig.savefig(out_image, dpi=150, bbox_inches="tight")
    plt.close(fig)


def plot_rate_scaling(rates_csv: str, out_image: str) -> float:
    """log lambda vs log A with the fitted slope annotated and a -1/3 guide.

    Returns the fitted slope.  With fewer than three usable points the fit
    is still drawn but a warning is emitted.
    """
    data = read_rates(rates_csv)
    A = np.asarray(data["A"], dtype=float)
    lam = np.asarray(data["lambda_qnz"], dtype=float)
    good = np.isfinite(lam) & (lam > 0) & (A > 0)
    A, lam = A[good], lam[good]
    if A.size < 2:
        raise ValueError(f"{rates_csv}: need at least two positive rates to fit")
    if A.size < 3:
        warnings.warn("rate fit from only two points", stacklevel=2)
    slope, intercept = np.polyfit(np.log(A), np.log(lam), 1)

    fig, ax = _new_axes("enhanced-dissipation rate scaling")
    ax.loglog(A, lam, "o", color="tab:blue", label=r"measured rate")
    grid = np.geomspace(A.min(), A.max(), 50)
    ax.loglog(grid, np.exp(intercept) * grid**slope, "-", color="tab:blue",
              label=f"fit slope = {slope:.3f}")
    anchor = lam[0] * (grid / A[0]) ** REFERENCE_SLOPE
    ax.loglog(grid, anchor, "--", color="gray", label="slope -1/3 guide")
    ax.annotate(f"slope = {slope:.3f}", xy=(0.05, 0.08), xycoords="axes fraction")
    ax.set_xlabel("A")
    ax.set_ylabel("decay rate")
    ax.legend(loc="best", fontsize=8)
    fig.savefig(out_image, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return float(slope)


def plot_sweep_threshold(sweep_csv: str, out_image: str) -> None:
    """Verdicts vs amplitude on a log axis; threshold interval shaded."""
    rows = read_sweep(sweep_csv)
    if not rows:
        raise ValueError(f"{sweep_csv}: no sweep rows to plot")
    fig, ax = _new_axes("verdict vs shear amplitude")
    colors = {"GLOBAL": "tab:green", "BLOWUP": "tab:red", "RUNNING": "tab:orange"}
    seen = set()
    for r in rows:
        label = r["verdict"] if r["verdict"] not in seen else None
        seen.add(r["verdict"])
        y = 1.0 if r["verdict"] == "GLOBAL" else 0.0
        ax.semilogx(r["A"], y, "o", ms=9, color=colors.get(r["verdict"], "k"),
                    label=label)
    lo, hi = rows[0]["threshold_low"], rows[0]["threshold_high"]
    if lo is not None and hi is not None and hi >= lo:
        ax.axvspan(lo, hi, color="tab:gray", alpha=0.3,
                   label=f"threshold in [{lo:g}, {hi:g}]")
    else:
        note = "no blow-up observed" if lo is None else "no global run observed"
        ax.annotate(note, xy=(0.05, 0.5), xycoords="axes fraction", fontsize=9)
    if any(r["nonmonotone"] for r in rows):
        ax.annotate("VERDICT_NONMONOTONE", xy=(0.05, 0.4),
                    xycoords="axes fraction", color="tab:red")
    ax.set_xlabel("A")
    ax.set_yticks([0.0, 1.0])
    ax.set_yticklabels(["BLOWUP", "GLOBAL"])
    ax.set_ylim(-0.4, 1.4)
    ax.legend(loc="center right", fontsize=8)
    fig.savefig(out_image, dpi=150, bbox_inches="tight")
    plt.close(fig)
