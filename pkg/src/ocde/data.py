"""Datasets, CSV ingestion, preprocessing and the 1-D target grid."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class DataError(ValueError):
    """Raised for malformed input data or invalid preprocessing arguments."""


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus a univariate target column.

    ``column_names`` names the feature columns; ``target_name`` names the target.
    """

    features: np.ndarray
    target: np.ndarray
    column_names: tuple[str, ...] = ()
    target_name: str = "y"
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.target, dtype=float).ravel()
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise DataError(
                f"target length {y.shape[0]} does not match {X.shape[0]} feature rows"
            )
        if X.shape[1] < 1:
            raise DataError("dataset needs at least one feature column")
        names = tuple(self.column_names) or tuple(f"x{j}" for j in range(X.shape[1]))
        if len(names) != X.shape[1]:
            raise DataError(f"{len(names)} column names for {X.shape[1]} features")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "target", y)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.intp)
        return Dataset(self.features[idx], self.target[idx], self.column_names,
                       self.target_name, self.name)

    def with_target(self, target) -> "Dataset":
        return Dataset(self.features, target, self.column_names, self.target_name, self.name)


@dataclass(frozen=True)
class ScalingParams:
    """Per-column (min, max) recorded from training data; the target is last."""

    mins: np.ndarray
    maxs: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.maxs == self.mins


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    val_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_frac < 1.0:
            raise DataError(f"train_frac must lie in (0, 1), got {self.train_frac}")
        if not 0.0 <= self.val_frac < 1.0:
            raise DataError(f"val_frac must lie in [0, 1), got {self.val_frac}")
        if self.train_frac + self.val_frac >= 1.0:
            raise DataError("train_frac + val_frac must be < 1")


@dataclass(frozen=True)
class TargetGrid:
    """Equal-width bins over [lo, hi]."""

    lo: float
    hi: float
    bins: int
    centers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.hi <= self.lo:
            raise DataError(f"grid needs finite hi > lo, got [{self.lo}, {self.hi}]")
        if int(self.bins) != self.bins or self.bins < 2:
            raise DataError(f"grid needs bins >= 2, got {self.bins}")
        object.__setattr__(self, "bins", int(self.bins))
        c = self.lo + (np.arange(self.bins) + 0.5) * self.bin_width
        c.flags.writeable = False
        object.__setattr__(self, "centers", c)

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def bin_index(self, y) -> np.ndarray:
        """Index of the bin containing each y; -1 outside [lo, hi]."""
        y = np.asarray(y, dtype=float)
        j = np.floor((y - self.lo) / self.bin_width).astype(np.intp)
        j = np.where(y == self.hi, self.bins - 1, j)
        inside = (y >= self.lo) & (y <= self.hi)
        return np.where(inside, np.clip(j, 0, self.bins - 1), -1)

    def integrate(self, values) -> np.ndarray:
        """Integral of piecewise-constant values (last axis runs over bins)."""
        return np.sum(values, axis=-1) * self.bin_width


def make_grid(lo: float, hi: float, bins: int) -> TargetGrid:
    return TargetGrid(float(lo), float(hi), bins)


def load_csv(path, target_column: str, name: str | None = None) -> Dataset:
    """Read a headered numeric CSV, splitting off ``target_column``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}, column {col!r}: cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}, column {col!r}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows, dtype=float)
    t = header.index(target_column)
    feat_cols = [j for j in range(len(header)) if j != t]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns besides the target")
    return Dataset(table[:, feat_cols], table[:, t], tuple(header[j] for j in feat_cols),
                   target_column, name or path.stem)


def write_csv(path, ds: Dataset) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*ds.column_names, ds.target_name])
        for row, t in zip(ds.features, ds.target):
            w.writerow([repr(float(v)) for v in row] + [repr(float(t))])


def fit_scaling(train: Dataset) -> ScalingParams:
    table = np.column_stack([train.features, train.target])
    return ScalingParams(table.min(axis=0), table.max(axis=0))


def apply_scaling(ds: Dataset, params: ScalingParams) -> Dataset:
    if params.mins.shape[0] != ds.d + 1:
        raise DataError(
            f"scaling has {params.mins.shape[0]} columns, dataset has {ds.d} features + target"
        )
    table = np.column_stack([ds.features, ds.target])
    span = params.maxs - params.mins
    const = params.constant
    scaled = (table - params.mins) / np.where(const, 1.0, span)
    scaled[:, const] = 0.0
    return Dataset(scaled[:, :-1], scaled[:, -1], ds.column_names, ds.target_name, ds.name)


def subsample(ds: Dataset, cap: int, seed=None) -> Dataset:
    """Uniform sample of at most ``cap`` rows without replacement, order preserved."""
    if cap < 1:
        raise DataError(f"cap must be >= 1, got {cap}")
    if ds.n <= cap:
        return ds
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(ds.n, size=cap, replace=False))
    return ds.take(idx)


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_train = math.floor(n * spec.train_frac)
    n_val = math.floor(n * spec.val_frac)
    n_test = n - n_train - n_val
    if n_train < 1 or n_test < 1 or (spec.val_frac > 0 and n_val < 1):
        raise DataError(
            f"split of n={n} with train={spec.train_frac}, val={spec.val_frac} "
            f"leaves an empty part ({n_train}, {n_val}, {n_test})"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    return perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]


def split(ds: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle-and-cut into (train, val, test); the test part absorbs rounding remainders."""
    tr, va, te = split_indices(ds.n, spec)
    return ds.take(tr), ds.take(va), ds.take(te)


def write_indices(path, idx) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        fh.write("index\n")
        fh.writelines(f"{int(i)}\n" for i in idx)


def read_indices(path) -> np.ndarray:
    lines = Path(path).read_text(encoding="utf-8").split()
    if not lines or lines[0] != "index":
        raise DataError(f"{path}: expected an 'index' header")
    return np.array([int(v) for v in lines[1:]], dtype=np.intp)
