"""Serialisation of a :class:`~wzlab.harness.ConvergenceReport`.

``errors.csv`` has the fixed columns ``n, mean_sup_error, stderr, rate_cum,
aborted`` with floats written as shortest round-trip reprs, so a rerun with
the same config reproduces the file byte for byte.  Tensors are emitted as
row-major flattened lists.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .harness import ConvergenceReport

CSV_COLUMNS = ("n", "mean_sup_error", "stderr", "rate_cum", "aborted")


def _num(x) -> str:
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.ravel().tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def tensors_payload(rep: ConvergenceReport) -> dict:
    dim = int(next(iter(rep.expected.values())).shape[-1])
    return {
        "dim": dim,
        "layout": "row-major",
        "expected": {k: np.asarray(v) for k, v in rep.expected.items()},
        "levels": [{"n": lv.n, **{f"{key}_{stat}": lv.tensors[key][stat]
                                   for key in ("H", "K", "theta", "YY")
                                   for stat in ("mean", "se")}}
                   for lv in rep.levels],
    }


def report_payload(rep: ConvergenceReport) -> dict:
    levels = []
    for lv in rep.levels:
        row = dataclasses.asdict(lv)
        row.pop("tensors")
        levels.append(row)
    return {
        "scenario": rep.config.scenario,
        "config": dataclasses.asdict(rep.config),
        "status": rep.status,
        "flags": rep.flags,
        "coupled_monotone": rep.monotone(),
        "rate": rep.rate,
        "levels": levels,
        "ut_diagnostics": rep.ut,
    }


def write_report(rep: ConvergenceReport, out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "errors.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for lv in rep.levels:
            w.writerow([lv.n, _num(lv.mean_sup_error), _num(lv.stderr), _num(lv.rate_cum),
                        lv.aborted])
    (out / "report.json").write_text(json.dumps(_clean(report_payload(rep)), indent=2) + "\n")
    (out / "tensors.json").write_text(json.dumps(_clean(tensors_payload(rep)), indent=2) + "\n")
    return out
