"""Regularly sampled curves and the nominal/test split."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, FormatError, ParseError, SplitError

MIN_NOMINAL = 4


def sample_grid(p: int) -> np.ndarray:
    """Left endpoints ``(j - 1) / p`` of the p dyadic cells of [0, 1)."""
    return np.arange(p, dtype=float) / p


@dataclass(frozen=True)
class CurveSet:
    """n curves (rows) observed at the same p regular time points.

    ``sample_times`` is always the grid ``(j - 1) / p``; it is derived from
    the width of ``values`` rather than passed in.
    """

    values: np.ndarray
    curve_ids: tuple = None
    sample_times: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise FormatError(f"curve values must be a 2-D array, got ndim={values.ndim}")
        n, p = values.shape
        if n == 0:
            raise EmptyInputError("curve set has no rows")
        if p < 2:
            raise FormatError(f"need at least 2 samples per curve, got {p}")
        if not np.all(np.isfinite(values)):
            row = int(np.argwhere(~np.isfinite(values))[0, 0])
            raise FormatError(f"non-finite value in row {row}")
        values.setflags(write=False)
        ids = self.curve_ids
        if ids is None:
            ids = tuple(f"day-{i}" for i in range(n))
        else:
            ids = tuple(str(i) for i in ids)
            if len(ids) != n:
                raise FormatError(f"{len(ids)} curve ids for {n} curves")
        times = sample_grid(p)
        times.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "curve_ids", ids)
        object.__setattr__(self, "sample_times", times)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def rows(self, indices: Sequence[int]) -> "CurveSet":
        idx = list(indices)
        return CurveSet(self.values[idx], [self.curve_ids[i] for i in idx])


@dataclass(frozen=True)
class SplitLabels:
    """Partition of ``range(n)`` into a certified-clean nominal part and a test part."""

    n: int
    nominal_indices: tuple
    test_indices: tuple

    @property
    def n0(self) -> int:
        return len(self.nominal_indices)

    @property
    def n1(self) -> int:
        return len(self.test_indices)


def make_split(n: int, nominal_indices: Iterable[int]) -> SplitLabels:
    nominal = [int(i) for i in nominal_indices]
    bad = [i for i in nominal if i < 0 or i >= n]
    if bad:
        raise SplitError(f"nominal index {bad[0]} out of range for n={n}")
    if len(set(nominal)) != len(nominal):
        raise SplitError("duplicate nominal indices")
    if len(nominal) < MIN_NOMINAL:
        raise SplitError(f"nominal set needs at least {MIN_NOMINAL} rows, got {len(nominal)}")
    nominal_set = set(nominal)
    test = [i for i in range(n) if i not in nominal_set]
    if not test:
        raise SplitError("test set is empty")
    return SplitLabels(n, tuple(sorted(nominal)), tuple(test))


def load_csv(path, has_header: bool = False) -> CurveSet:
    """Read one curve per row. Blank lines are skipped."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if has_header:
            next(reader, None)
        for lineno, record in enumerate(reader, start=2 if has_header else 1):
            if not record or all(not cell.strip() for cell in record):
                continue
            if width is None:
                width = len(record)
            elif len(record) != width:
                raise FormatError(
                    f"row {len(rows)} (line {lineno}) has {len(record)} fields, expected {width}"
                )
            try:
                rows.append([float(cell) for cell in record])
            except ValueError:
                col = next(j for j, cell in enumerate(record) if not _is_float(cell))
                raise ParseError(
                    f"row {len(rows)} (line {lineno}), column {col}: "
                    f"cannot parse {record[col]!r} as a number"
                ) from None
    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    return CurveSet(np.array(rows))


def save_csv(curves: CurveSet, path, header: bool = False) -> None:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"t{j}" for j in range(curves.p)])
        for row in curves.values:
            writer.writerow([format(v, ".17g") for v in row])


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True
