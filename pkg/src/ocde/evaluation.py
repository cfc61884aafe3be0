"""CDE loss, the toy oracle, and the Raw / Debiased experiment protocols."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np
from scipy.signal import find_peaks

from .boosting import BoostConfig, BoostedModel, fit_regressor
from .data import Dataset, TargetGrid, make_grid
from .estimator import (
    DEFAULT_BINS,
    DEFAULT_PAD_FRAC,
    DensityCurve,
    InstrumentalDist,
    OcdeModel,
    fit_instrumental,
    fit_ocde,
    normalize_rows,
    tune_components,
)
from .nnk import DEFAULT_H_GRID, DEFAULT_K_GRID, fit_nnk, tune_nnk

METHODS = ("ocde", "ocde-smooth", "nnk")
REPORT_COLUMNS = ("dataset", "method", "protocol", "loss", "stderr", "runtime_seconds", "n_test")


def default_fourier_candidates(bins: int = DEFAULT_BINS) -> tuple[int, ...]:
    """Roughly log-spaced component counts from 1 to ``bins`` (about 50 values)."""
    return tuple(int(c) for c in np.unique(np.round(np.geomspace(1, bins, 64))))


class CdeEstimator(Protocol):
    """Anything that maps query rows to normalised histogram densities on ``grid``."""

    grid: TargetGrid

    def densities(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class UniformEstimator:
    grid: TargetGrid

    def densities(self, X) -> np.ndarray:
        n = np.atleast_2d(np.asarray(X)).shape[0]
        return np.full((n, self.grid.bins), 1.0 / (self.grid.hi - self.grid.lo))


@dataclass(frozen=True)
class ToyOracleEstimator:
    """True conditional density of the circle toy problem, binned on ``grid``."""

    grid: TargetGrid

    def densities(self, X) -> np.ndarray:
        x = np.atleast_2d(np.asarray(X, dtype=float))[:, 0]
        vals = toy_oracle_density(x[:, None], self.grid.centers[None, :])
        return normalize_rows(vals, self.grid)


def _phi(z):
    return np.exp(-0.5 * np.square(z)) / math.sqrt(2.0 * math.pi)


def toy_oracle_density(x, y):
    """p(y | x) for x = 5 cos(t), y = 5 sin(t) + N(0, 1) noise, t uniform.

    Given x the sine is +-sqrt(25 - x^2) with equal probability, so the
    conditional is an equal mixture of unit normals at those two centres.
    At |x| = 5 both centres coincide at 0.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 5.0):
        raise ValueError("toy oracle is defined only for |x| <= 5")
    s = np.sqrt(25.0 - np.square(x))
    out = 0.5 * _phi(np.asarray(y, dtype=float) - s) + 0.5 * _phi(np.asarray(y, dtype=float) + s)
    return float(out) if np.ndim(out) == 0 else out


def find_modes(curve: DensityCurve, rel_prominence: float = 0.1) -> np.ndarray:
    """Locations of local maxima whose prominence is at least ``rel_prominence * max``.

    The threshold discards ripples left by Fourier truncation and by the
    piecewise-constant classifier.
    """
    v = np.concatenate([[0.0], curve.values, [0.0]])
    peaks, _ = find_peaks(v, prominence=rel_prominence * float(np.max(curve.values)))
    return curve.grid.centers[peaks - 1]


def cde_loss_from_values(values: np.ndarray, targets, grid: TargetGrid) -> tuple[float, float]:
    """Mean and standard error of ``int p^2 dy - 2 p(y_i)`` over test points.

    ``p(y_i)`` is read from the bin containing ``y_i`` and is 0 off the grid.
    """
    values = np.atleast_2d(values)
    targets = np.asarray(targets, dtype=float)
    if values.shape != (targets.shape[0], grid.bins):
        raise ValueError(f"density matrix {values.shape} does not fit "
                         f"{targets.shape[0]} targets on {grid.bins} bins")
    sq = np.sum(values**2, axis=1) * grid.bin_width
    j = grid.bin_index(targets)
    at_y = np.where(j >= 0, values[np.arange(len(j)), np.maximum(j, 0)], 0.0)
    per_point = sq - 2.0 * at_y
    n = per_point.shape[0]
    stderr = float(np.std(per_point, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(per_point)), stderr


def cde_loss(est: CdeEstimator, test: Dataset, grid: TargetGrid | None = None) -> tuple[float, float]:
    grid = grid or est.grid
    return cde_loss_from_values(est.densities(test.features), test.target, grid)


def shifted_curve(model: OcdeModel, x) -> DensityCurve:
    """Residual density moved back to the target scale: p(y|x) = p_eps(y - f(x) | x)."""
    if model.debias_regressor is None:
        raise ValueError("model has no debiasing regressor")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    f = float(model.debias_regressor.predict(x)[0])
    g = model.grid
    return DensityCurve(make_grid(g.lo + f, g.hi + f, g.bins), model.densities(x)[0])


@dataclass
class EvalReport:
    dataset: str
    method: str
    protocol: str
    loss: float
    stderr: float
    runtime_seconds: float
    n_test: int
    error: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings shared by every method in one protocol run."""

    boost: BoostConfig = field(default_factory=BoostConfig)
    bins: int = DEFAULT_BINS
    pad_frac: float = DEFAULT_PAD_FRAC
    instrumental: tuple[float, float] | None = None
    fourier_candidates: tuple[int, ...] | None = None
    nnk_k_grid: tuple[int, ...] = DEFAULT_K_GRID
    nnk_h_grid: tuple[float, ...] = DEFAULT_H_GRID
    seed: int = 0


def _instrumental(train: Dataset, cfg: ExperimentConfig) -> InstrumentalDist:
    if cfg.instrumental is not None:
        return InstrumentalDist(*cfg.instrumental)
    return fit_instrumental(train.target, cfg.pad_frac)


def run_raw(train: Dataset, val: Dataset, test: Dataset, methods, config: ExperimentConfig,
            protocol: str = "raw") -> list[EvalReport]:
    """Fit each method on ``train`` (tuning on ``val`` where it tunes) and score ``test``."""
    methods = list(methods)
    if not methods:
        return []
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; choose from {METHODS}")
    inst = _instrumental(train, config)
    grid = make_grid(inst.lo, inst.hi, config.bins)
    seed = config.seed
    reports = []
    fitted: tuple[OcdeModel, float] | None = None

    def ocde_model():
        nonlocal fitted
        if fitted is None:
            t0 = time.perf_counter()
            model = fit_ocde(train, val if val.n else None, inst, grid, config.boost, seed)
            fitted = (model, time.perf_counter() - t0)
        return fitted

    for m in methods:
        t0 = time.perf_counter()
        # A fit shared by the two OCDE variants is charged to both.
        shared_fit = 0.0
        if m in ("ocde", "ocde-smooth"):
            reused = fitted is not None
            model, fit_time = ocde_model()
            shared_fit = fit_time if reused else 0.0
            if m == "ocde":
                est = model
            else:
                cands = config.fourier_candidates or default_fourier_candidates(grid.bins)
                est = model.with_smoothing(tune_components(model, train, cands))
        else:
            k, h = tune_nnk(train, val, config.nnk_k_grid, config.nnk_h_grid, grid)
            est = fit_nnk(train, k, h, grid)
        loss, se = cde_loss(est, test, grid)
        elapsed = time.perf_counter() - t0 + shared_fit
        reports.append(EvalReport(train.name, m, protocol, loss, se, elapsed, test.n))
    return reports


def run_debiased(train: Dataset, val: Dataset, test: Dataset, methods, config: ExperimentConfig,
                 regressor: BoostedModel | None = None) -> list[EvalReport]:
    """Raw protocol on residuals ``y - f(x)`` of a boosted point regressor.

    ``regressor`` overrides the fitted one (for instance a zero-tree model).
    """
    t0 = time.perf_counter()
    if regressor is None:
        has_val = val.n > 0
        cfg = config.boost if has_val else replace(config.boost, early_stopping_rounds=0)
        regressor = fit_regressor(train.features, train.target,
                                  val.features if has_val else None,
                                  val.target if has_val else None, cfg)
    reg_time = time.perf_counter() - t0

    def resid(ds: Dataset) -> Dataset:
        if ds.n == 0:
            return ds
        return ds.with_target(ds.target - regressor.predict(ds.features))

    reports = run_raw(resid(train), resid(val), resid(test), methods, config, protocol="debiased")
    for r in reports:
        r.runtime_seconds += reg_time
    return reports


def write_report(path, reports) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*REPORT_COLUMNS, "error"])
        for r in reports:
            w.writerow([r.dataset, r.method, r.protocol, repr(float(r.loss)), repr(float(r.stderr)),
                        repr(float(r.runtime_seconds)), r.n_test, r.error])


def read_report(path) -> list[EvalReport]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames[:len(REPORT_COLUMNS)]) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected report header {reader.fieldnames}")
        out = []
        for row in reader:
            out.append(EvalReport(row["dataset"], row["method"], row["protocol"],
                                  float(row["loss"]), float(row["stderr"]),
                                  float(row["runtime_seconds"]), int(row["n_test"]),
                                  row.get("error", "") or ""))
        return out

