"""Observed trajectories and their CSV representation.

The CSV layout is a header ``t,x1,...,xp`` followed by one numeric row per
observation time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .exceptions import ParseError, ValidationError

__all__ = ["TimeSeries", "TimeSeriesBundle", "read_csv", "write_csv"]


@dataclass(frozen=True)
class TimeSeries:
    """An ``n``-length, ``p``-dimensional noisy trajectory.

    Parameters
    ----------
    times : array-like, shape (n,)
        Strictly increasing observation times.
    values : array-like, shape (n, p)
        One row per observation. A 1-d input is read as ``p = 1``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1:
            raise ValidationError("times must be a 1-d array")
        if values.ndim != 2:
            raise ValidationError("values must be a 2-d array of shape (n, p)")
        if times.shape[0] < 2:
            raise ValidationError(f"need at least 2 observations, got {times.shape[0]}")
        if values.shape[0] != times.shape[0]:
            raise ValidationError(
                f"values has {values.shape[0]} rows but there are {times.shape[0]} times"
            )
        if values.shape[1] < 1:
            raise ValidationError("values must have at least one column")
        if not (np.all(np.isfinite(times)) and np.all(np.isfinite(values))):
            raise ValidationError("times and values must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValidationError("times must be strictly increasing")
        times.flags.writeable = False
        values.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class TimeSeriesBundle:
    """``r`` trajectories of the same system, one per initial condition."""

    series: tuple = field(default_factory=tuple)

    def __post_init__(self):
        series = tuple(self.series)
        if len(series) < 1:
            raise ValidationError("a bundle needs at least one series")
        p, n = series[0].p, series[0].n
        for ts in series[1:]:
            if ts.p != p:
                raise ValidationError("all series in a bundle must share p")
            if ts.n != n:
                raise ValidationError("all series in a bundle must have the same length")
        object.__setattr__(self, "series", series)

    @property
    def r(self) -> int:
        return len(self.series)

    @property
    def p(self) -> int:
        return self.series[0].p

    def __iter__(self) -> Iterator[TimeSeries]:
        return iter(self.series)

    def __len__(self) -> int:
        return len(self.series)

    def __getitem__(self, i) -> TimeSeries:
        return self.series[i]


def read_csv(path) -> TimeSeries:
    """Read a ``t,x1,...,xp`` CSV file into a :class:`TimeSeries`."""
    path = Path(path)
    # newline="" lets the csv module accept both LF and CRLF
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "t":
            raise ParseError(f"{path}:1: header must be 't,x1,...,xp', got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric field in {row!r}") from None
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least 2 data rows, got {len(rows)}")
    data = np.asarray(rows)
    return TimeSeries(data[:, 0], data[:, 1:])


def write_csv(ts: TimeSeries, path, header: Sequence[str] | None = None) -> None:
    """Write ``ts`` with 17 significant digits, LF line endings."""
    path = Path(path)
    if header is None:
        header = ["t"] + [f"x{j + 1}" for j in range(ts.p)]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t, row in zip(ts.times, ts.values):
            fh.write(",".join(f"{v:.17g}" for v in (t, *row)) + "\n")
