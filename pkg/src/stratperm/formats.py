"""Readers for matrix JSON, design CSV and test-data CSV files.

Units in CSV files may appear in any order; they are stably reordered by
stratum. Stratum labels are mapped to ``0..K-1`` in sorted order (numeric
when every label is an integer), with a warning when the levels have gaps.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .core import StratifiedMatrix, StratumLayout
from .designs import ExperimentDesign, PostStratSpec, SamplingDesign
from .errors import CountMismatch, InvariantViolation, ParseError
from .multivariate import MultiStatistic

__all__ = [
    "LabelsReindexed",
    "Table",
    "read_matrix",
    "read_multi",
    "read_table",
    "read_design",
    "read_poststrat",
    "read_test_data",
]


class LabelsReindexed(UserWarning):
    """Stratum labels were not contiguous and have been renumbered."""


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno, exc.colno) from None


def read_matrix(path) -> StratifiedMatrix:
    """Parse ``{"sizes": [...], "blocks": [[[...]]...]}``."""
    data = _load_json(path)
    if not isinstance(data, dict) or "blocks" not in data:
        raise ParseError(f"{path}: expected an object with 'sizes' and 'blocks'")
    try:
        return StratifiedMatrix.from_dict(data)
    except (TypeError, KeyError) as exc:
        raise ParseError(f"{path}: malformed matrix ({exc})") from None


def read_multi(path) -> MultiStatistic:
    data = _load_json(path)
    if not isinstance(data, dict) or "components" not in data:
        raise ParseError(f"{path}: expected an object with 'sizes' and 'components'")
    try:
        return MultiStatistic.from_dict(data)
    except (TypeError, KeyError) as exc:
        raise ParseError(f"{path}: malformed multivariate statistic ({exc})") from None


@dataclass
class Table:
    """Columns of a CSV file after reordering units by stratum."""

    layout: StratumLayout
    labels: list
    units: list
    columns: dict
    order: np.ndarray

    def has(self, name) -> bool:
        return name in self.columns


def _stratum_codes(raw: list[str]):
    try:
        keys = [int(x) for x in raw]
        numeric = True
    except ValueError:
        keys = raw
        numeric = False
    levels = sorted(set(keys))
    if numeric and levels != list(range(levels[0], levels[0] + len(levels))):
        warnings.warn(f"stratum levels {levels} have gaps; renumbered as 0..{len(levels) - 1}",
                      LabelsReindexed, stacklevel=3)
    index = {lev: i for i, lev in enumerate(levels)}
    return np.array([index[k] for k in keys]), levels


def read_table(path, required=(), optional=()) -> Table:
    """Read a CSV with a ``stratum`` column plus the named numeric columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file", 1) from None
        if "stratum" not in header:
            raise ParseError(f"{path}: missing 'stratum' column", 1)
        for name in required:
            if name not in header:
                raise ParseError(f"{path}: missing '{name}' column", 1)
        wanted = [c for c in list(required) + list(optional) if c in header]
        pos = {c: header.index(c) for c in header}
        strata, units = [], []
        cols = {c: [] for c in wanted}
        for row in reader:
            if not row or all(not x.strip() for x in row):
                continue
            line = reader.line_num
            if len(row) != len(header):
                raise ParseError(f"{path}: expected {len(header)} fields, found {len(row)}", line)
            strata.append(row[pos["stratum"]].strip())
            units.append(row[pos["unit"]].strip() if "unit" in pos else str(len(units)))
            for c in wanted:
                text = row[pos[c]].strip()
                try:
                    cols[c].append(float(text))
                except ValueError:
                    raise ParseError(f"{path}: column '{c}' is not numeric: {text!r}", line, pos[c] + 1) from None
    if not strata:
        raise ParseError(f"{path}: no data rows", 2)
    codes, levels = _stratum_codes(strata)
    order = np.argsort(codes, kind="stable")
    layout = StratumLayout(tuple(np.bincount(codes).tolist()))
    columns = {c: np.asarray(v)[order] for c, v in cols.items()}
    return Table(layout, levels, [units[i] for i in order], columns, order)


def _counts_from(table: Table, name: str):
    """Per-stratum counts from a per-row ``n1`` column, which must be constant within strata."""
    col = table.columns[name]
    out = []
    for k, r in enumerate(table.layout.index_ranges):
        vals = np.unique(col[r])
        if vals.size != 1 or vals[0] != int(vals[0]):
            raise InvariantViolation("n1 is one integer per stratum", f"stratum {table.labels[k]} has n1 values {vals.tolist()}")
        out.append(int(vals[0]))
    return tuple(out)


def read_design(path):
    """Design CSV: ``unit, stratum``, outcome ``Y`` or ``Y1, Y0``, and ``z`` and/or ``n1``.

    ``z`` is the realized indicator (it also fixes the per-stratum counts);
    ``n1`` repeats the stratum's sample (treated) size on every row.
    Returns ``(design, realization or None, table)``.
    """
    table = read_table(path, optional=("Y", "Y1", "Y0", "z", "n1"))
    if not (table.has("z") or table.has("n1")):
        raise ParseError(f"{path}: need a 'z' or an 'n1' column", 1)
    z = None
    if table.has("z"):
        z = table.columns["z"]
        if not np.all((z == 0) | (z == 1)):
            raise InvariantViolation("z is binary")
        z = z.astype(np.int8)
        counts = tuple(int(z[r].sum()) for r in table.layout.index_ranges)
        if table.has("n1") and _counts_from(table, "n1") != counts:
            raise CountMismatch("'n1' disagrees with the counts implied by 'z'")
    else:
        counts = _counts_from(table, "n1")
    if table.has("Y1") and table.has("Y0"):
        d = ExperimentDesign(table.layout, table.columns["Y1"], table.columns["Y0"], counts)
    elif table.has("Y"):
        d = SamplingDesign(table.layout, table.columns["Y"], counts)
    else:
        raise ParseError(f"{path}: need a 'Y' column or both 'Y1' and 'Y0'", 1)
    return d, z, table


def read_poststrat(path, n1: int):
    """Population CSV for post-stratification; returns ``(spec, population, table)``."""
    table = read_table(path, optional=("Y", "Y1", "Y0"))
    labels = tuple(np.repeat(np.arange(table.layout.K), table.layout.sizes).tolist())
    if table.has("Y1") and table.has("Y0"):
        return PostStratSpec(labels, n1, "experiment"), (table.columns["Y1"], table.columns["Y0"]), table
    if table.has("Y"):
        return PostStratSpec(labels, n1, "sampling"), table.columns["Y"], table
    raise ParseError(f"{path}: need a 'Y' column or both 'Y1' and 'Y0'", 1)


def read_test_data(path):
    """Test CSV with columns ``stratum, z, y`` and optionally ``d``."""
    table = read_table(path, required=("z", "y"), optional=("d",))
    z = table.columns["z"]
    if not np.all((z == 0) | (z == 1)):
        raise InvariantViolation("z is binary")
    return table
