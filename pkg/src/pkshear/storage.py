"""Checkpoint and CSV persistence.

Checkpoint layout: one JSON header line, then the raw little-endian
complex128 coefficient payload of the fields n, u1, u2, u3 in that order,
each in C order of the (k1, m, k3) index (k3 fastest, then m, then k1).
Reading back a written state is bit exact.  The header carries the grid
spec, time, frame shear, format version, field order, payload size, and
optionally the diagnostics accumulator state so a resumed run reproduces
E(t) exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import CheckpointError
from .diagnostics import DIAG_COLUMNS, DiagRecord
from .fields import FlowState, SpectralField
from .grid import Grid, GridSpec, make_grid

__all__ = ["write_checkpoint", "read_checkpoint", "write_csv", "read_csv"]

CHECKPOINT_VERSION = 1
_FIELD_ORDER = ("n", "u1", "u2", "u3")


def write_checkpoint(state: FlowState, path: str,
                     diag_state: dict | None = None) -> None:
    spec = state.grid.spec
    nbytes_field = state.n.coeffs.size * 16
    header = {
        "version": CHECKPOINT_VERSION,
        "grid": {
            "Nx": spec.Nx, "Ny": spec.Ny, "Nz": spec.Nz,
            "Ly": spec.Ly, "dealias_fraction": spec.dealias_fraction,
        },
        "t": state.t,
        "frame_shear": state.frame_shear,
        "fields": list(_FIELD_ORDER),
        "dtype": "<c16",
        "index_order": "k1,m,k3 (k3 fastest)",
        "payload_bytes": nbytes_field * len(_FIELD_ORDER),
        "diag": diag_state,
    }
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8"))
        fh.write(b"\n")
        for f in state.fields():
            fh.write(np.ascontiguousarray(f.coeffs, dtype="<c16").tobytes())
    os.replace(tmp, path)


def read_checkpoint(path: str, grid: Grid | None = None
                    ) -> tuple[FlowState, dict | None]:
    """Load a state (and optional diagnostics blob); bit exact round trip."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        if not header_line.endswith(b"\n"):
            raise CheckpointError(f"{path}: truncated header")
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"{path}: unreadable header: {exc}") from exc
        version = header.get("version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported checkpoint version {version!r} "
                f"(expected {CHECKPOINT_VERSION})"
            )
        gd = header["grid"]
        spec = GridSpec(Nx=gd["Nx"], Ny=gd["Ny"], Nz=gd["Nz"], Ly=gd["Ly"],
                        dealias_fraction=gd["dealias_fraction"])
        if grid is None or grid.spec != spec:
            grid = make_grid(spec)
        payload = fh.read()
    expect = header["payload_bytes"]
    if len(payload) != expect:
        raise CheckpointError(
            f"{path}: payload is {len(payload)} bytes, header promises {expect}"
        )
    if header["fields"] != list(_FIELD_ORDER):
        raise CheckpointError(f"{path}: unexpected field order {header['fields']}")
    per_field = expect // len(_FIELD_ORDER)
    sigma = header["frame_shear"]
    fields = []
    for i in range(len(_FIELD_ORDER)):
        buf = payload[i * per_field:(i + 1) * per_field]
        arr = np.frombuffer(buf, dtype="<c16").reshape(spec.shape).copy()
        fields.append(SpectralField(grid, arr, sigma))
    state = FlowState(*fields, t=header["t"])
    return state, header.get("diag")


def _format_value(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{v:.17g}"


def write_csv(records: list[DiagRecord], path: str, append: bool = False) -> None:
    """Diagnostics rows with exact column names; floats at 17 significant digits."""
    fresh = not (append and os.path.exists(path) and os.path.getsize(path) > 0)
    mode = "a" if not fresh else "w"
    with open(path, mode, encoding="utf-8") as fh:
        if fresh:
            fh.write(",".join(DIAG_COLUMNS) + "\n")
        for rec in records:
            fh.write(",".join(_format_value(v) for v in rec.as_row()) + "\n")


def read_csv(path: str) -> list[DiagRecord]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header != list(DIAG_COLUMNS):
            raise IOError(f"{path}: unexpected CSV columns {header}")
        out = []
        for line in fh:
            if not line.strip():
                continue
            parts = line.strip().split(",")
            vals = [float(p) for p in parts[:-1]] + [int(parts[-1])]
            out.append(DiagRecord(*vals))
    return out
