"""Labelled dataset container and its CSV interchange format.

The on-disk format is a plain numeric CSV: one row per sample, feature
columns first, one trailing integer label column.  A single header row is
allowed and detected by failing to parse the first line as numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError, UsageError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) and per-sample integer labels (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-D, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ShapeError(
                f"y must have shape ({X.shape[0]},), got {y.shape}"
            )
        if not np.issubdtype(y.dtype, np.integer):
            raise ShapeError(f"labels must be integers, got dtype {y.dtype}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y.astype(np.int64))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(X=self.X[idx], y=self.y[idx])


def save_csv(dataset: Dataset, path, header: bool = True) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header:
            writer.writerow([f"x{j}" for j in range(dataset.dim)] + ["label"])
        for row, label in zip(dataset.X, dataset.y):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_csv(path) -> Dataset:
    path = Path(path)
    rows: list[list[str]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        for record in csv.reader(fh):
            if record:
                rows.append(record)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    start = 0
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        start = 1  # header row
    if start == len(rows):
        raise UsageError(f"{path}: no data rows after header")
    width = len(rows[start])
    if width < 2:
        raise UsageError(f"{path}: rows need at least one feature and a label")
    feats, labels = [], []
    for i, record in enumerate(rows[start:], start=start + 1):
        if len(record) != width:
            raise UsageError(f"{path}:{i}: expected {width} columns, got {len(record)}")
        try:
            feats.append([float(v) for v in record[:-1]])
            label = float(record[-1])
        except ValueError as exc:
            raise UsageError(f"{path}:{i}: non-numeric value ({exc})") from None
        if label != int(label):
            raise UsageError(f"{path}:{i}: label column must be integer, got {record[-1]}")
        labels.append(int(label))
    return Dataset(X=np.asarray(feats, dtype=np.float64), y=np.asarray(labels, dtype=np.int64))
