"""Plain-text export and parsing of ledgers, sweep reports and field checkpoints.

Ledgers and checkpoints are comma-separated text with ``# key=value`` header
lines; the last header line ``# columns=...`` names the columns.  Sweep reports
are JSON.  Floats are written with 17 significant digits so a round trip is
exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diagnostics import LEDGER_COLUMNS, EntropyLedger, SweepReport
from .grid import Grid, GridField

_FMT = "%.17g"


def _write_table(path, meta: dict, columns, data):
    lines = [f"{k}={v}" for k, v in meta.items()]
    lines.append("columns=" + ",".join(columns))
    np.savetxt(path, np.asarray(data, dtype=float).T, delimiter=",", fmt=_FMT,
               header="\n".join(lines), comments="# ")


def _read_table(path):
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition("=")
            meta[key] = val
    if "columns" not in meta:
        raise ValueError(f"{path}: missing columns header")
    columns = meta.pop("columns").split(",")
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.size == 0:
        data = np.zeros((0, len(columns)))
    if data.shape[1] != len(columns):
        raise ValueError(f"{path}: expected {len(columns)} columns, found {data.shape[1]}")
    return meta, columns, data.T


def write_ledger(path, ledger: EntropyLedger):
    meta = {
        "eps": repr(float(ledger.eps)),
        "dx": repr(float(ledger.dx)),
        "dt": repr(float(ledger.dt)),
        "residual_int_max": repr(float(ledger.residual_int_max)),
        **{k: v for k, v in ledger.meta.items()},
    }
    cols = [ledger.columns()[c] for c in LEDGER_COLUMNS]
    floor = ledger.phi_floor if ledger.phi_floor is not None else np.full(len(ledger.t), np.nan)
    _write_table(path, meta, LEDGER_COLUMNS + ("phi_floor",), cols + [floor])


def read_ledger(path) -> EntropyLedger:
    meta, columns, data = _read_table(path)
    got = dict(zip(columns, data))
    missing = [c for c in LEDGER_COLUMNS if c not in got]
    if missing:
        raise ValueError(f"{path}: ledger lacks columns {missing}")
    extra = {k: v for k, v in meta.items() if k not in ("eps", "dx", "dt", "residual_int_max")}
    if "cells" in extra:
        extra["cells"] = int(extra["cells"])
    return EntropyLedger(*(got[c] for c in LEDGER_COLUMNS),
                         eps=float(meta.get("eps", "nan")), dx=float(meta.get("dx", "nan")),
                         dt=float(meta.get("dt", "nan")),
                         residual_int_max=float(meta.get("residual_int_max", 0.0)),
                         phi_floor=got.get("phi_floor"), meta=extra)


def write_checkpoint(path, field: GridField, meta: dict | None = None):
    g = field.grid
    info = {"t": repr(float(field.t)), "x_min": repr(g.x_min), "x_max": repr(g.x_max),
            "cells": g.cells, "boundary": g.boundary, **(meta or {})}
    _write_table(path, info, ("x",) + tuple(field.components), [g.x] + list(field.data))


def read_checkpoint(path) -> tuple[GridField, dict]:
    meta, columns, data = _read_table(path)
    grid = Grid(float(meta.pop("x_min")), float(meta.pop("x_max")), int(meta.pop("cells")), meta.pop("boundary"))
    t = float(meta.pop("t"))
    if columns[0] != "x":
        raise ValueError(f"{path}: first column must be x")
    return GridField(grid, data[1:], t, tuple(columns[1:])), meta


def sweep_report_to_dict(report: SweepReport) -> dict:
    def num(x):
        return None if not np.isfinite(x) else float(x)

    phi_max = report.phi_max if report.phi_max is not None else np.full(len(report.epsilon), np.nan)
    return {
        "rate": num(report.rate),
        "fitted_constant": num(report.fitted_constant),
        "fit_valid": bool(report.fit_valid),
        "rate_max": num(report.rate_max),
        "notes": list(report.notes),
        "meta": report.meta,
        "points": [
            {"epsilon": float(e), "cells": int(n), "phi_T": float(p), "phi_floor_T": float(f), "C": float(c),
             "phi_max": num(pm)}
            for e, n, p, f, c, pm in zip(report.epsilon, report.cells, report.phi_T, report.phi_floor_T,
                                         report.C, phi_max)
        ],
    }


def write_sweep_report(path, report: SweepReport):
    Path(path).write_text(json.dumps(sweep_report_to_dict(report), indent=2) + "\n")


def read_sweep_report(path) -> SweepReport:
    d = json.loads(Path(path).read_text())
    pts = d["points"]

    def arr(key):
        return np.array([np.nan if p[key] is None else p[key] for p in pts], dtype=float)

    def num(x):
        return float("nan") if x is None else float(x)

    return SweepReport(arr("epsilon"), arr("cells").astype(int), arr("phi_T"), arr("phi_floor_T"), arr("C"),
                       num(d["rate"]), num(d["fitted_constant"]), bool(d["fit_valid"]), list(d.get("notes", [])),
                       dict(d.get("meta", {})), arr("phi_max") if all("phi_max" in p for p in pts) else None,
                       num(d.get("rate_max")))
