"""CSV/JSON serialisation, results-directory layout and golden comparison.

CSV files carry one header line of ``name[unit]`` cells and values printed
with 17 significant digits, which round-trips IEEE doubles exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import MassLayerError

FLOAT_FMT = "%.17g"

SUMMARY_SCHEMA = {
    "type": "object",
    "required": ["command", "status", "results"],
    "properties": {
        "command": {"enum": ["check", "analyze", "solve", "spectrum", "simulate", "sweep"]},
        "status": {"enum": ["ok", "failed"]},
        "results": {"type": ["object", "array"]},
        "error": {"type": "object"},
    },
}

PROFILE_COLUMNS = (("x", "-"), ("u", "conc"), ("v", "conc"))


class CSVFormatError(MassLayerError, ValueError):
    pass


def _header(columns):
    return ",".join(f"{name}[{unit}]" for name, unit in columns)


def _parse_header(line, path):
    names, units = [], []
    for cell in line.strip().split(","):
        cell = cell.strip()
        if "[" in cell and cell.endswith("]"):
            name, unit = cell[:-1].split("[", 1)
        else:
            name, unit = cell, ""
        names.append(name)
        units.append(unit)
    if not names or any(not n for n in names):
        raise CSVFormatError(f"{path}:1: malformed header {line.strip()!r}")
    return names, units


def write_table(path, columns, data):
    """Write equal-length columns. ``columns`` is a sequence of (name, unit)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = [np.asarray(data[name], dtype=float) for name, _ in columns]
    n = {a.shape for a in arrays}
    if len(n) != 1:
        raise ValueError("all columns must have the same length")
    table = np.column_stack(arrays) if arrays[0].ndim else np.array([arrays])
    with open(path, "w", newline="\n") as fh:
        fh.write(_header(columns) + "\n")
        for row in table:
            fh.write(",".join(FLOAT_FMT % x for x in row) + "\n")


def read_table(path, expected=None):
    """Read a CSV written by :func:`write_table` into a dict of arrays.

    Raises
    ------
    CSVFormatError
        Header names differ from ``expected`` or a row fails to parse; the
        message names the file and line.
    """
    path = Path(path)
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CSVFormatError(f"{path}: empty file")
    names, _ = _parse_header(lines[0], path)
    if expected is not None and list(names) != list(expected):
        raise CSVFormatError(f"{path}:1: expected columns {list(expected)}, found {names}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(names):
            raise CSVFormatError(f"{path}:{lineno}: expected {len(names)} fields, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells])
        except ValueError as exc:
            raise CSVFormatError(f"{path}:{lineno}: {exc}") from None
    arr = np.array(rows, dtype=float).reshape(-1, len(names))
    return {name: arr[:, i].copy() for i, name in enumerate(names)}


def write_profile(x, u, v, path):
    write_table(path, PROFILE_COLUMNS, {"x": x, "u": u, "v": v})


def read_profile(path):
    t = read_table(path, expected=[c for c, _ in PROFILE_COLUMNS])
    return t["x"], t["u"], t["v"]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def validate_summary(summary):
    jsonschema.validate(_jsonable(summary), SUMMARY_SCHEMA)


class ResultsDir:
    """Layout of one command's output directory."""

    SUBDIRS = ("profiles", "spectra", "traces")

    def __init__(self, path):
        self.path = Path(path)
        self.path.mkdir(parents=True, exist_ok=True)

    def sub(self, name):
        p = self.path / name
        p.mkdir(parents=True, exist_ok=True)
        return p

    def write_config(self, resolved):
        write_json(self.path / "config.resolved.json", resolved)

    def write_summary(self, summary):
        validate_summary(summary)
        write_json(self.path / "summary.json", summary)

    def write_meta(self, meta):
        write_json(self.path / "meta.json", meta)

    def write_index(self, index):
        write_json(self.path / "index.json", index)


@dataclass
class GoldenReport:
    passed: bool
    offenders: list = field(default_factory=list)
    missing: list = field(default_factory=list)
    compared_files: int = 0

    def worst(self, k=5):
        return sorted(self.offenders, key=lambda o: -o["excess"])[:k]


def _tol_for(tolerances, default, fname, col):
    for key in (f"{fname}:{col}", col):
        if key in tolerances:
            return tolerances[key]
    return default


def _walk_json(a, g, prefix, fname, tolerances, default, offenders):
    if isinstance(g, dict):
        if not isinstance(a, dict):
            offenders.append({"file": fname, "where": prefix, "excess": math.inf,
                              "detail": "type mismatch"})
            return
        for k, gv in g.items():
            if k not in a:
                offenders.append({"file": fname, "where": f"{prefix}.{k}", "excess": math.inf,
                                  "detail": "missing key"})
            else:
                _walk_json(a[k], gv, f"{prefix}.{k}", fname, tolerances, default, offenders)
    elif isinstance(g, list):
        if not isinstance(a, list) or len(a) != len(g):
            offenders.append({"file": fname, "where": prefix, "excess": math.inf,
                              "detail": "length mismatch"})
            return
        for i, (av, gv) in enumerate(zip(a, g)):
            _walk_json(av, gv, f"{prefix}[{i}]", fname, tolerances, default, offenders)
    elif isinstance(g, (int, float)) and not isinstance(g, bool):
        if not isinstance(a, (int, float)) or isinstance(a, bool):
            offenders.append({"file": fname, "where": prefix, "excess": math.inf,
                              "detail": "type mismatch"})
            return
        key = prefix.rsplit(".", 1)[-1].split("[")[0]
        tol = _tol_for(tolerances, default, fname, key)
        diff = abs(a - g)
        if diff > tol:
            offenders.append({"file": fname, "where": prefix, "actual": a, "golden": g,
                              "abs_diff": diff, "tol": tol, "excess": diff - tol})
    elif a != g:
        offenders.append({"file": fname, "where": prefix, "actual": a, "golden": g,
                          "excess": math.inf, "detail": "value mismatch"})


def compare_golden(actual, golden, tolerances=None, default_tol=1e-10,
                   ignore=("meta.json",)) -> GoldenReport:
    """Compare every CSV/JSON under ``golden`` with its twin under ``actual``.

    ``tolerances`` maps a column (or ``"relative/path.csv:column"``) to an
    absolute tolerance; everything else uses ``default_tol``.
    """
    actual, golden = Path(actual), Path(golden)
    for p in (actual, golden):
        if not p.is_dir():
            raise FileNotFoundError(f"results directory {p} does not exist")
    tolerances = dict(tolerances or {})
    report = GoldenReport(passed=True)
    for root, _, files in os.walk(golden):
        for name in sorted(files):
            gpath = Path(root) / name
            rel = gpath.relative_to(golden).as_posix()
            if name in ignore:
                continue
            apath = actual / rel
            if not apath.exists():
                report.missing.append(rel)
                continue
            report.compared_files += 1
            if name.endswith(".csv"):
                gt, at = read_table(gpath), read_table(apath)
                for col, gv in gt.items():
                    if col not in at or at[col].shape != gv.shape:
                        report.offenders.append({"file": rel, "where": col, "excess": math.inf,
                                                 "detail": "missing column or shape mismatch"})
                        continue
                    tol = _tol_for(tolerances, default_tol, rel, col)
                    diff = np.abs(at[col] - gv)
                    i = int(np.argmax(diff)) if diff.size else 0
                    if diff.size and diff[i] > tol:
                        report.offenders.append({"file": rel, "where": f"{col}[{i}]", "row": i + 2,
                                                 "actual": float(at[col][i]), "golden": float(gv[i]),
                                                 "abs_diff": float(diff[i]), "tol": tol,
                                                 "excess": float(diff[i] - tol)})
            elif name.endswith(".json"):
                _walk_json(read_json(apath), read_json(gpath), "$", rel, tolerances,
                           default_tol, report.offenders)
    report.passed = not report.offenders and not report.missing
    return report
