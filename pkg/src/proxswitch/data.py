"""Observed-data and test-set containers with CSV round-tripping."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DataFormatError(ValueError):
    pass


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Training tuples (X, A, Z, W, Y); U is kept only for simulated data."""

    x: np.ndarray
    a: np.ndarray
    z: np.ndarray
    w: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = None

    def __post_init__(self):
        x = _frozen(self.x).reshape(-1, 2)
        object.__setattr__(self, "x", x)
        n = x.shape[0]
        a = _frozen(self.a, dtype=np.int64).reshape(-1)
        object.__setattr__(self, "a", a)
        for name in ("z", "w", "y"):
            object.__setattr__(self, name, _frozen(getattr(self, name)).reshape(-1))
        if self.u is not None:
            object.__setattr__(self, "u", _frozen(self.u).reshape(-1))
        cols = [a, self.z, self.w, self.y] + ([self.u] if self.u is not None else [])
        if any(c.shape[0] != n for c in cols):
            raise DataFormatError("columns have different lengths")
        if n and not np.all(np.isin(a, (-1, 1))):
            raise DataFormatError("treatment must take values in {-1, 1}")
        if not all(np.all(np.isfinite(c)) for c in (x, *cols[1:])):
            raise DataFormatError("non-finite value in dataset")

    def __len__(self):
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.a[idx], self.z[idx], self.w[idx], self.y[idx],
                       None if self.u is None else self.u[idx])


@dataclass(frozen=True, eq=False)
class TestSet:
    """Covariates, proxies and both potential outcomes for value evaluation."""

    x: np.ndarray
    z: np.ndarray
    w: np.ndarray
    u: np.ndarray
    y_pos: np.ndarray
    y_neg: np.ndarray

    __test__ = False  # not a pytest class

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x).reshape(-1, 2))
        for name in ("z", "w", "u", "y_pos", "y_neg"):
            object.__setattr__(self, name, _frozen(getattr(self, name)).reshape(-1))
        m = self.x.shape[0]
        if any(getattr(self, k).shape[0] != m for k in ("z", "w", "u", "y_pos", "y_neg")):
            raise DataFormatError("columns have different lengths")

    def __len__(self):
        return self.x.shape[0]


DATASET_HEADER = ["x1", "x2", "a", "z", "w", "y"]
TESTSET_HEADER = ["x1", "x2", "z", "w", "u", "y_pos", "y_neg"]


def _fmt(v: float) -> str:
    return repr(float(v))


def write_dataset(ds: Dataset, path: str | Path) -> None:
    header = DATASET_HEADER + (["u"] if ds.u is not None else [])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for i in range(ds.n):
            row = [_fmt(ds.x[i, 0]), _fmt(ds.x[i, 1]), str(int(ds.a[i])),
                   _fmt(ds.z[i]), _fmt(ds.w[i]), _fmt(ds.y[i])]
            if ds.u is not None:
                row.append(_fmt(ds.u[i]))
            out.writerow(row)


def _parse_float(text: str, lineno: int) -> float:
    try:
        v = float(text)
    except ValueError:
        raise DataFormatError(f"line {lineno}: cannot parse {text!r}") from None
    if not math.isfinite(v):
        raise DataFormatError(f"line {lineno}: non-finite value")
    return v


def read_dataset(path: str | Path) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError("missing header")
    header = [h.strip() for h in rows[0]]
    if header not in (DATASET_HEADER, DATASET_HEADER + ["u"]):
        raise DataFormatError(f"unexpected header {header}")
    width = len(header)
    vals = []
    a_vals = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != width:
            raise DataFormatError(f"line {lineno}: expected {width} fields, got {len(row)}")
        a_txt = row[2].strip()
        if a_txt not in ("1", "-1", "1.0", "-1.0", "+1"):
            raise DataFormatError(f"line {lineno}: treatment must be -1 or 1, got {a_txt!r}")
        a_vals.append(int(float(a_txt)))
        vals.append([_parse_float(t, lineno) for i, t in enumerate(row) if i != 2])
    arr = np.array(vals, dtype=float).reshape(-1, width - 1)
    u = arr[:, 5] if width == 7 else None
    return Dataset(arr[:, 0:2], np.array(a_vals, dtype=np.int64), arr[:, 2], arr[:, 3], arr[:, 4], u)


def write_testset(ts: TestSet, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(TESTSET_HEADER)
        cols = (ts.x[:, 0], ts.x[:, 1], ts.z, ts.w, ts.u, ts.y_pos, ts.y_neg)
        for i in range(len(ts)):
            out.writerow([_fmt(c[i]) for c in cols])


def read_testset(path: str | Path) -> TestSet:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != TESTSET_HEADER:
        raise DataFormatError("unexpected test-set header")
    arr = np.array([[_parse_float(t, i + 2) for t in r] for i, r in enumerate(rows[1:]) if r],
                   dtype=float).reshape(-1, 7)
    return TestSet(arr[:, :2], arr[:, 2], arr[:, 3], arr[:, 4], arr[:, 5], arr[:, 6])
