"""Tabular numeric datasets: CSV loading, validation and column access."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for unreadable, malformed or empty datasets."""


@dataclass(frozen=True)
class Record:
    id: int
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """n records of m named float attributes, in file order.

    ``values`` is an (n, m) float64 array marked read-only; record ids are
    the dense row indices 0..n-1.
    """

    schema: tuple[str, ...]
    values: np.ndarray
    dropped: int = 0
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        schema = tuple(str(s) for s in self.schema)
        if len(set(schema)) != len(schema):
            dupes = sorted({s for s in schema if schema.count(s) > 1})
            raise DatasetError(f"duplicate attribute names: {dupes}")
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2 or values.shape[1] != len(schema):
            raise DatasetError(
                f"values shape {values.shape} does not match {len(schema)} attributes"
            )
        if not np.all(np.isfinite(values)):
            raise DatasetError("dataset contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.schema.index(name)
        except ValueError:
            raise KeyError(f"unknown attribute {name!r}; schema is {list(self.schema)}") from None

    def record(self, i: int) -> Record:
        return Record(id=int(i), values=self.values[i])

    def __len__(self) -> int:
        return self.n

    def __iter__(self):
        return (self.record(i) for i in range(self.n))


def column(dataset: Dataset, name: str) -> np.ndarray:
    """Return attribute ``name`` for every record, in record order."""
    return dataset.values[:, dataset.index(name)]


def _parse_datetime(cell: str) -> float:
    # Naive timestamps are pinned to UTC so the wall-clock hour and weekday
    # written in the file survive the round trip through epoch seconds.
    dt = datetime.fromisoformat(cell.strip())
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def load_csv(
    path: str | Path,
    delimiter: str = ",",
    header: bool = True,
    na_policy: str = "drop",
    datetime_columns: Iterable[str] = (),
) -> Dataset:
    """Load a CSV file with one header row into a :class:`Dataset`.

    Parameters
    ----------
    path : str or Path
        UTF-8 CSV file.
    delimiter : str
        Field separator, comma by default.
    header : bool
        Must be True; headerless files are rejected.
    na_policy : {"drop", "error"}
        What to do with a row holding a missing, non-numeric or non-finite
        cell. ``"drop"`` removes the whole row and counts it in
        ``Dataset.dropped``; ``"error"`` raises on the first such cell.
    datetime_columns : iterable of str
        Columns holding ISO-8601 timestamps. They are converted to POSIX
        seconds; naive values are read as UTC.

    Returns
    -------
    Dataset
    """
    if not header:
        raise DatasetError("a header row naming every column is required")
    if na_policy not in ("drop", "error"):
        raise DatasetError(f"na_policy must be 'drop' or 'error', got {na_policy!r}")
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc

    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            names = next(reader)
        except StopIteration:
            raise DatasetError(f"{path} is empty") from None
        names = [s.strip() for s in names]
        if any(not s for s in names):
            raise DatasetError(f"{path}: header has an empty column name")
        dt_cols = set(datetime_columns)
        unknown = dt_cols - set(names)
        if unknown:
            raise DatasetError(f"datetime columns not in header: {sorted(unknown)}")
        is_dt = [s in dt_cols for s in names]

        rows: list[list[float]] = []
        dropped = 0
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(names):
                raise DatasetError(
                    f"{path}:{lineno}: ragged row with {len(raw)} fields, expected {len(names)}"
                )
            parsed = []
            bad = None
            for name, cell, dt in zip(names, raw, is_dt):
                try:
                    v = _parse_datetime(cell) if dt else float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    bad = (name, cell)
                    break
                parsed.append(v)
            if bad is not None:
                if na_policy == "error":
                    raise DatasetError(f"{path}:{lineno}: bad value {bad[1]!r} in column {bad[0]!r}")
                dropped += 1
                continue
            rows.append(parsed)

    if not rows:
        raise DatasetError(f"{path}: no usable records ({dropped} dropped)")
    if dropped:
        log.info("%s: dropped %d record(s) with missing or non-numeric values", path, dropped)
    values = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(names))
    return Dataset(schema=tuple(names), values=values, dropped=dropped, source=str(path))


def write_csv(dataset: Dataset, path: str | Path, delimiter: str = ",") -> None:
    """Write ``dataset`` so that :func:`load_csv` reads back identical floats."""
    _write_table(path, dataset.schema, dataset.values, delimiter=delimiter)


def _write_table(path, header: Sequence[str], rows, delimiter: str = ",") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    # repr gives the shortest string that round-trips exactly
    return repr(float(v))


def from_columns(columns: dict[str, Sequence[float]]) -> Dataset:
    """Build a dataset from a mapping of attribute name to values."""
    names = tuple(columns)
    values = np.column_stack([np.asarray(columns[k], dtype=np.float64) for k in names])
    return Dataset(schema=names, values=values)
