"""Labeled curve datasets: UCR-style loading, validation and CSV output."""

from __future__ import annotations

import csv
import dataclasses
import io
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from src.afrf.core.logging import log
from src.afrf.core.utils import DataFormatError, InvalidInputError


@dataclass(frozen=True, eq=False)
class CurveSet:
    """N curves observed on a common grid of T points, with labels remapped to 0..U.

    class_names[u] is the original label of class u.
    """

    values: np.ndarray
    domain: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        domain = np.asarray(self.domain, dtype=float)
        labels = np.asarray(self.labels, dtype=np.intp)
        if values.ndim != 2:
            raise InvalidInputError("curve values must be an N x T matrix")
        n, t = values.shape
        if t < 2:
            raise InvalidInputError(f"curves need at least 2 time points, got {t}")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("curve values contain missing or non-finite entries")
        if domain.shape != (t,):
            raise InvalidInputError(f"domain has {domain.size} points but curves have {t}")
        if np.any(np.diff(domain) <= 0):
            raise InvalidInputError("domain must be strictly increasing")
        if labels.shape != (n,):
            raise InvalidInputError(f"{labels.size} labels for {n} curves")
        if n and labels.min() < 0:
            raise InvalidInputError("labels must be non-negative class indices")
        names = tuple(self.class_names) or tuple(str(u) for u in range(int(labels.max()) + 1 if n else 0))
        if n and len(names) < int(labels.max()) + 1:
            raise InvalidInputError("class_names does not cover every label")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "domain", domain)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "class_names", names)

    @classmethod
    def from_raw_labels(cls, values, raw_labels: Sequence[Any], domain=None) -> "CurveSet":
        """Remap arbitrary labels onto 0..U, preserving the originals in class_names."""
        values = np.asarray(values, dtype=float)
        if domain is None:
            domain = np.linspace(0.0, 1.0, values.shape[1])
        originals, labels = _remap_labels(raw_labels)
        return cls(values=values, domain=domain, labels=labels, class_names=originals)

    @property
    def n_curves(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, rows) -> "CurveSet":
        rows = np.asarray(rows, dtype=np.intp)
        return dataclasses.replace(self, values=self.values[rows], labels=self.labels[rows])


def _remap_labels(raw_labels: Sequence[Any]) -> tuple[tuple[str, ...], np.ndarray]:
    raw = list(raw_labels)
    try:
        numeric = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        numeric = None
    if numeric is not None and np.all(np.isfinite(numeric)):
        uniques, labels = np.unique(numeric, return_inverse=True)
        names = tuple(_label_text(u) for u in uniques)
    else:
        uniques, labels = np.unique(np.asarray([str(v) for v in raw]), return_inverse=True)
        names = tuple(str(u) for u in uniques)
    return names, labels.astype(np.intp)


def _label_text(value: float) -> str:
    if float(value).is_integer():
        return str(int(value))
    return repr(float(value))


def _detect_separator(line: str) -> str:
    if "\t" in line:
        return "\t"
    if "," in line:
        return ","
    return r"\s+"


def load_ucr(path: str | Path) -> CurveSet:
    """Read a UCR-style file: one series per line, class label first.

    Fields are tab or comma separated (detected from the first record; plain
    whitespace is accepted as a fallback). The domain is rescaled to equally
    spaced points on [0, 1].
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"not a text file: {exc.reason}", path=str(path)) from exc
    line_numbers = [i + 1 for i, line in enumerate(text.splitlines()) if line.strip()]
    records = [line.strip() for line in text.splitlines() if line.strip()]
    if not records:
        raise DataFormatError("file contains no records", path=str(path))
    sep = _detect_separator(records[0])

    try:
        frame = pd.read_csv(
            io.StringIO("\n".join(records)),
            sep=sep,
            header=None,
            dtype=str,
            engine="python",
            skip_blank_lines=False,
        )
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        line = line_numbers[int(match.group(1)) - 1] if match and int(match.group(1)) <= len(line_numbers) else None
        raise DataFormatError(f"ragged row: {exc}", path=str(path), line=line) from exc
    except (pd.errors.EmptyDataError, csv.Error, ValueError) as exc:
        raise DataFormatError(f"unreadable records: {exc}", path=str(path)) from exc

    missing = frame.isna().any(axis=1).to_numpy()
    if missing.any():
        row = int(np.argmax(missing))
        raise DataFormatError(
            f"ragged row: expected {frame.shape[1]} fields", path=str(path), line=line_numbers[row]
        )

    numeric = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce"))
    bad = numeric.isna().to_numpy()
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise DataFormatError(
            f"non-numeric field {frame.iat[row, col]!r} in column {col + 1}",
            path=str(path),
            line=line_numbers[row],
        )

    # float() on the text is correctly rounded, so written files read back bit-exactly
    try:
        data = frame.apply(lambda col: col.str.strip()).to_numpy(dtype=object).astype(float)
    except (ValueError, OverflowError) as exc:
        raise DataFormatError(f"unreadable numeric field: {exc}", path=str(path)) from exc
    n_points = data.shape[1] - 1
    if n_points < 2:
        raise DataFormatError(f"records need at least 2 time points, got {n_points}", path=str(path))

    curves = CurveSet.from_raw_labels(data[:, 1:], data[:, 0])
    log("LOAD", path=path.name, n_curves=curves.n_curves, n_points=n_points, classes=",".join(curves.class_names))
    return curves


def write_curves(curves: CurveSet, path: str | Path, delimiter: str = "\t") -> None:
    """Write curves in the UCR layout load_ucr reads (original labels first)."""
    frame = pd.DataFrame(curves.values)
    frame.insert(0, "label", [curves.class_names[u] for u in curves.labels])
    frame.to_csv(path, sep=delimiter, header=False, index=False, lineterminator="\n")
    log("WRITE", path=Path(path).name, n_curves=curves.n_curves)


def _record_dict(row: Any) -> Mapping[str, Any]:
    if isinstance(row, Mapping):
        return row
    if dataclasses.is_dataclass(row):
        return dataclasses.asdict(row)
    if hasattr(row, "model_dump"):
        return row.model_dump()
    raise InvalidInputError(f"cannot turn {type(row).__name__} into a table record")


def write_table(rows: Iterable[Any], path: str | Path, columns: Optional[Sequence[str]] = None) -> None:
    """Write homogeneous records as CSV with a header.

    Column order is `columns` when given, else the key order of the first
    record. Floats are written with repr precision so they read back exactly.
    """
    records = [_record_dict(row) for row in rows]
    if columns is None:
        if not records:
            raise InvalidInputError("columns are required to write an empty table")
        columns = list(records[0].keys())
    columns = list(columns)
    for i, record in enumerate(records):
        if set(record.keys()) != set(columns):
            raise InvalidInputError(f"record {i} has fields {sorted(record)}, expected {sorted(columns)}")
    frame = pd.DataFrame.from_records(records, columns=columns)
    frame.to_csv(path, index=False, lineterminator="\n")


def read_table(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")
