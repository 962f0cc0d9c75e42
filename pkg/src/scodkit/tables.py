"""CSV sample tables.

Layout: ``sample_id,split,label`` followed by named real-valued columns.
``split`` is one of ID, OOD, UNLABELED; ``label`` is -1 outside ID rows.
Empty cells are missing values and load as NaN.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

__all__ = ["SPLITS", "SampleTable", "format_float", "write_text"]

SPLITS = ("ID", "OOD", "UNLABELED")
_FIXED = ("sample_id", "split", "label")


def format_float(x: float) -> str:
    if np.isnan(x):
        return ""
    return "%.17g" % x


def write_text(path, text: str):
    """Write UTF-8 text with ``\\n`` line endings and a trailing newline."""
    if not text.endswith("\n"):
        text += "\n"
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


@dataclass(eq=False)
class SampleTable:
    sample_id: list
    split: np.ndarray
    label: np.ndarray
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sample_id)
        self.split = np.asarray(self.split, dtype=object)
        self.label = np.asarray(self.label, dtype=int)
        if self.split.shape != (n,) or self.label.shape != (n,):
            raise DataError("sample_id, split and label differ in length")
        bad = sorted(set(self.split) - set(SPLITS))
        if bad:
            raise DataError(f"unknown split value(s) {bad}; expected one of {SPLITS}")
        if np.any(self.label[self.split == "ID"] < 0):
            raise DataError("ID rows need a label >= 0")
        cols = {}
        for name, values in self.columns.items():
            if name in _FIXED:
                raise DataError(f"column name {name!r} is reserved")
            arr = np.asarray(values, dtype=float)
            if arr.shape != (n,):
                raise DataError(f"column {name!r} has {arr.size} values for {n} rows")
            cols[name] = arr
        self.columns = cols

    def __len__(self):
        return len(self.sample_id)

    def __eq__(self, other):
        if not isinstance(other, SampleTable):
            return NotImplemented
        return (self.sample_id == other.sample_id
                and np.array_equal(self.split, other.split)
                and np.array_equal(self.label, other.label)
                and list(self.columns) == list(other.columns)
                and all(np.array_equal(self.columns[k], other.columns[k], equal_nan=True)
                        for k in self.columns))

    def mask(self, split: str) -> np.ndarray:
        return self.split == split

    def count(self, split: str) -> int:
        return int(np.sum(self.split == split))

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(f"table has no column {name!r}; available: {list(self.columns)}") from None

    def require_finite(self, name: str, rows: np.ndarray):
        """Column values on ``rows`` (boolean mask); raises naming the first bad row."""
        values = self.column(name)
        bad = np.flatnonzero(rows & ~np.isfinite(values))
        if bad.size:
            i = int(bad[0])
            raise DataError(
                f"column {name!r} has a non-finite value at row {i + 2} "
                f"(sample_id {self.sample_id[i]!r})")
        return values[rows]

    def negate(self, names):
        for name in names:
            self.columns[name] = -self.column(name)

    def select(self, rows) -> "SampleTable":
        idx = np.flatnonzero(rows) if np.asarray(rows).dtype == bool else np.asarray(rows)
        return SampleTable([self.sample_id[i] for i in idx], self.split[idx], self.label[idx],
                           {k: v[idx] for k, v in self.columns.items()})

    # -- CSV -------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        names = list(self.columns)
        writer.writerow(list(_FIXED) + names)
        cols = [self.columns[k] for k in names]
        for i, sid in enumerate(self.sample_id):
            writer.writerow([sid, self.split[i], int(self.label[i])]
                            + [format_float(c[i]) for c in cols])
        return buf.getvalue()

    def write_csv(self, path):
        write_text(path, self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "SampleTable":
        path = Path(path)
        try:
            fh = open(path, encoding="utf-8", newline="")
        except OSError as exc:
            raise DataError(f"cannot open table {path}: {exc}") from exc
        with fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            if tuple(header[:3]) != _FIXED:
                raise DataError(f"{path}: header must start with {','.join(_FIXED)}")
            names = header[3:]
            if len(set(names)) != len(names):
                raise DataError(f"{path}: duplicate column names")
            ids, splits, labels, rows = [], [], [], []
            for lineno, row in enumerate(reader, start=2):
                if len(row) != len(header):
                    raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
                ids.append(row[0])
                splits.append(row[1])
                try:
                    labels.append(int(row[2]))
                    rows.append([float(v) if v != "" else np.nan for v in row[3:]])
                except ValueError as exc:
                    raise DataError(f"{path}:{lineno}: {exc}") from None
        data = np.array(rows, dtype=float).reshape(len(ids), len(names))
        try:
            return cls(ids, splits, labels, {k: data[:, j] for j, k in enumerate(names)})
        except DataError as exc:
            raise DataError(f"{path}: {exc}") from None
