"""Nearest-neighbour kernel conditional density baseline (NN-K).

For a query x the estimate is a Gaussian KDE, bandwidth ``h``, over the targets
of the ``k`` training points closest to x in Euclidean feature distance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, TargetGrid
from .estimator import DensityCurve, normalize_rows

DEFAULT_K_GRID = (5, 10, 20, 50, 100, 200)
DEFAULT_H_GRID = (0.005, 0.01, 0.02, 0.05, 0.1, 0.2)

_QUERY_CHUNK = 64


class NnkError(ValueError):
    pass


@dataclass(frozen=True)
class NnkModel:
    features: np.ndarray
    targets: np.ndarray
    k: int
    h: float
    grid: TargetGrid | None = None

    def neighbors(self, X, k=None) -> np.ndarray:
        """Indices of the k nearest training rows per query, ties to the lower index."""
        return _knn(self.features, np.atleast_2d(np.asarray(X, dtype=float)), k or self.k)

    def raw_on_grid(self, X, grid: TargetGrid | None = None) -> np.ndarray:
        grid = grid or self.grid
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.features.shape[1]:
            raise NnkError(
                f"query has {X.shape[1]} feature columns, model expects {self.features.shape[1]}"
            )
        out = np.empty((X.shape[0], grid.bins))
        for s in range(0, X.shape[0], _QUERY_CHUNK):
            nb = self.neighbors(X[s:s + _QUERY_CHUNK])
            out[s:s + _QUERY_CHUNK] = _kde(self.targets[nb], grid.centers, self.h).mean(axis=1)
        return out

    def densities(self, X, grid: TargetGrid | None = None) -> np.ndarray:
        grid = grid or self.grid
        return normalize_rows(self.raw_on_grid(X, grid), grid)

    def density_on_grid(self, x, grid: TargetGrid | None = None) -> DensityCurve:
        grid = grid or self.grid
        return DensityCurve(grid, self.densities(x, grid)[0])


def _knn(train: np.ndarray, X: np.ndarray, k: int) -> np.ndarray:
    out = np.empty((X.shape[0], k), dtype=np.intp)
    for s in range(0, X.shape[0], _QUERY_CHUNK):
        # Exact squared differences so equal distances compare equal for tie-breaking.
        d2 = np.sum((X[s:s + _QUERY_CHUNK, None, :] - train[None, :, :]) ** 2, axis=2)
        out[s:s + _QUERY_CHUNK] = np.argsort(d2, axis=1, kind="stable")[:, :k]
    return out


def _kde(centers_y: np.ndarray, grid_centers: np.ndarray, h: float) -> np.ndarray:
    """Gaussian kernel values, shape ``(queries, neighbours, bins)``."""
    z = (grid_centers[None, None, :] - centers_y[:, :, None]) / h
    return np.exp(-0.5 * z * z) / (h * np.sqrt(2.0 * np.pi))


def fit_nnk(train: Dataset, k: int, h: float, grid: TargetGrid | None = None) -> NnkModel:
    if not 1 <= k <= train.n:
        raise NnkError(f"k must lie in [1, {train.n}], got {k}")
    if not h > 0:
        raise NnkError(f"bandwidth must be positive, got {h}")
    return NnkModel(np.asarray(train.features), np.asarray(train.target), int(k), float(h), grid)


def nnk_density_on_grid(model: NnkModel, x, grid: TargetGrid) -> DensityCurve:
    return model.density_on_grid(x, grid)


def loss_table(train: Dataset, val: Dataset, k_grid, h_grid, grid: TargetGrid) -> dict:
    """CDE loss on ``val`` for every usable (k, h) pair.

    Neighbour lists are computed once at the largest k; per bandwidth, the
    kernel sums for all k come from one cumulative sum over neighbours.
    """
    from .evaluation import cde_loss_from_values

    ks = sorted({int(k) for k in k_grid if 1 <= k <= train.n})
    hs = sorted({float(h) for h in h_grid if h > 0})
    if not ks or not hs:
        raise NnkError("empty or out-of-range tuning grid")
    kmax = ks[-1]
    nb = _knn(np.asarray(train.features), np.asarray(val.features), kmax)
    targets = np.asarray(train.target)[nb]
    table = {}
    for h in hs:
        per_k = {k: np.empty((val.n, grid.bins)) for k in ks}
        for s in range(0, val.n, _QUERY_CHUNK):
            cums = np.cumsum(_kde(targets[s:s + _QUERY_CHUNK], grid.centers, h), axis=1)
            for k in ks:
                per_k[k][s:s + _QUERY_CHUNK] = cums[:, k - 1, :] / k
        for k in ks:
            loss, _ = cde_loss_from_values(normalize_rows(per_k[k], grid), val.target, grid)
            table[(k, h)] = loss
    return table


def tune_nnk(train: Dataset, val: Dataset, k_grid=DEFAULT_K_GRID, h_grid=DEFAULT_H_GRID,
             grid: TargetGrid | None = None) -> tuple[int, float]:
    """Exhaustive (k, h) search on validation CDE loss; ties go to smaller k, then smaller h."""
    if grid is None:
        raise NnkError("tune_nnk needs a target grid")
    table = loss_table(train, val, k_grid, h_grid, grid)
    best = None
    for k, h in sorted(table, key=lambda kh: (kh[0], kh[1])):
        if best is None or table[(k, h)] < table[best]:
            best = (k, h)
    return best

