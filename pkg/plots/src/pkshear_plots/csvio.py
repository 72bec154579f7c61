"""Strict readers for the simulator's delimited outputs.

Schemas are pinned to the producer's documented formats; any unknown or
missing column is an error so schema drift cannot produce silently wrong
figures.  Inputs are opened read-only and never modified.
"""

from __future__ import annotations

import csv
import json
import os

# diagnostics rows written by the simulator (one per sampled step)
DIAG_COLUMNS = (
    "t", "mass", "n_l2", "n_linf", "n0_l2", "n_neq_l2_qnz", "n_neq_l2_qz",
    "omega2_neq_l2", "delta_u2_neq_l2", "u0_linf", "E_t", "div_u_rel",
    "min_n", "remap_loss", "dt", "flags",
)

RATES_COLUMNS = ("A", "lambda_qnz", "lambda_qz", "oracle_rel_err", "remap_loss_total")

SWEEP_COLUMNS = (
    "A", "verdict", "t_final", "max_n_linf", "hypothesis_E_fired",
    "hypothesis_linf_fired", "threshold_low", "threshold_high", "nonmonotone",
)


class SchemaError(ValueError):
    """CSV header does not match the pinned schema."""


def _check_header(path: str, header: list[str], expected: tuple[str, ...]) -> None:
    if tuple(header) != expected:
        raise SchemaError(
            f"{path}: columns {header} do not match the expected schema {list(expected)}"
        )


def read_table(path: str, expected: tuple[str, ...]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, not even a header") from None
        _check_header(path, header, expected)
        rows = []
        for raw in reader:
            if not raw or all(not c for c in raw):
                continue
            rows.append(dict(zip(header, raw)))
    return rows


def read_diag(path: str) -> dict[str, list[float]]:
    rows = read_table(path, DIAG_COLUMNS)
    out: dict[str, list[float]] = {c: [] for c in DIAG_COLUMNS}
    for r in rows:
        for c in DIAG_COLUMNS:
            out[c].append(float(r[c]))
    return out


def read_rates(path: str) -> dict[str, list[float]]:
    rows = read_table(path, RATES_COLUMNS)
    out: dict[str, list[float]] = {c: [] for c in RATES_COLUMNS}
    for r in rows:
        for c in RATES_COLUMNS:
            out[c].append(float(r[c]))
    return out


def read_sweep(path: str) -> list[dict]:
    rows = read_table(path, SWEEP_COLUMNS)
    parsed = []
    for r in rows:
        parsed.append({
            "A": float(r["A"]),
            "verdict": r["verdict"],
            "t_final": float(r["t_final"]),
            "max_n_linf": float(r["max_n_linf"]),
            "hypothesis_E_fired": bool(int(r["hypothesis_E_fired"])),
            "hypothesis_linf_fired": bool(int(r["hypothesis_linf_fired"])),
            "threshold_low": float(r["threshold_low"]) if r["threshold_low"] else None,
            "threshold_high": float(r["threshold_high"]) if r["threshold_high"] else None,
            "nonmonotone": bool(int(r["nonmonotone"])),
        })
    return parsed


def read_run_meta(csv_path: str) -> dict | None:
    """run.json next to a CSV, when the producer wrote one."""
    path = os.path.join(os.path.dirname(os.path.abspath(csv_path)), "run.json")
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
