"""Comparison of experiment outputs with stored golden files."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from splab.errors import InputError

DEFAULT_TOLERANCE = 1e-9


@dataclass
class Difference:
    file: str
    row: int | None  # 1-based data row (header excluded); None for whole-file issues
    column: str | None
    expected: str | None
    actual: str | None

    def __str__(self):
        if self.row is None:
            return f"{self.file}: {self.actual}"
        return (f"{self.file}: row {self.row}, column {self.column!r}: "
                f"expected {self.expected!r}, got {self.actual!r}")


@dataclass
class DiffReport:
    differences: list = field(default_factory=list)
    compared: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.differences

    @property
    def first(self) -> Difference | None:
        return self.differences[0] if self.differences else None


def _value(cell: str):
    if cell in ("true", "false"):
        return cell
    try:
        return float(Fraction(cell)) if "/" in cell else float(cell)
    except (ValueError, ZeroDivisionError):
        return cell


def _close(a: str, b: str, tol: float) -> bool:
    if a == b:
        return True
    va, vb = _value(a), _value(b)
    if isinstance(va, float) and isinstance(vb, float):
        if math.isnan(va) and math.isnan(vb):
            return True
        return abs(va - vb) <= tol * max(1.0, abs(va), abs(vb))
    return False


def compare_csv(name: str, expected: str, actual: str, exact: bool,
                tolerances: dict | None = None, default_tol: float = DEFAULT_TOLERANCE) -> Difference | None:
    """First differing cell of two CSV documents, or ``None``.

    Exact mode demands identical bytes and reports the first differing cell.
    Float mode compares numerically with a relative tolerance per column
    (``tolerances`` maps column name to tolerance).
    """
    if exact and expected == actual:
        return None
    exp_rows = list(csv.reader(io.StringIO(expected)))
    act_rows = list(csv.reader(io.StringIO(actual)))
    if not exp_rows or not act_rows:
        return Difference(name, None, None, None, "empty file")
    header = exp_rows[0]
    if act_rows[0] != header:
        return Difference(name, 0, None, ",".join(header), ",".join(act_rows[0]))
    tolerances = tolerances or {}
    for i, (er, ar) in enumerate(zip(exp_rows[1:], act_rows[1:]), start=1):
        for col, e, a in zip(header, er, ar):
            same = e == a if exact else _close(e, a, tolerances.get(col, default_tol))
            if not same:
                return Difference(name, i, col, e, a)
        if len(er) != len(ar):
            return Difference(name, i, None, str(len(er)), f"{len(ar)} cells")
    if len(exp_rows) != len(act_rows):
        return Difference(name, None, None, None,
                          f"row count {len(act_rows) - 1} != expected {len(exp_rows) - 1}")
    if exact:
        return Difference(name, None, None, None, "bytes differ (line endings or quoting)")
    return None


def compare_golden(manifest, golden_dir, tolerances: dict | None = None,
                   default_tol: float = DEFAULT_TOLERANCE) -> DiffReport:
    """Compare every CSV listed in ``manifest`` with the same-named file in ``golden_dir``.

    ``manifest`` is a RunManifest, a manifest dict, or a path to manifest.json.
    """
    if isinstance(manifest, (str, Path)):
        path = Path(manifest)
        data = json.loads(path.read_text())
        mode, files, out_dir = data["mode"], data["files"], path.parent
    elif isinstance(manifest, dict):
        mode, files = manifest["mode"], manifest["files"]
        out_dir = Path(manifest.get("out_dir", "."))
    else:
        mode, files, out_dir = manifest.mode, manifest.files, Path(manifest.out_dir)
    golden_dir = Path(golden_dir)
    if not golden_dir.is_dir():
        raise InputError(f"golden directory {golden_dir} does not exist")
    report = DiffReport()
    for entry in files:
        name = entry["name"]
        if not name.endswith(".csv"):
            continue
        gold = golden_dir / name
        report.compared.append(name)
        if not gold.exists():
            report.differences.append(Difference(name, None, None, None, "missing golden file"))
            continue
        diff = compare_csv(name, gold.read_text(), (out_dir / name).read_text(),
                           mode == "exact", tolerances, default_tol)
        if diff is not None:
            report.differences.append(diff)
    return report
