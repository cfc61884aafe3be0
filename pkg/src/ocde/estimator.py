"""Odds conditional density estimation.

A conditional density p(y|x) is recovered from a classifier that tells real
pairs (x, y) apart from pairs (x, y~) whose target was replaced by a draw from
a known instrumental density q. With balanced classes the classifier odds
estimate p(x, y) / (p(x) q(y)), so ``q(y) * odds(x, y)`` estimates p(y|x).
The raw estimate is then binned on a grid and renormalised, and may be
low-pass filtered in Fourier space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boosting import BoostConfig, BoostedModel, fit_classifier, proba_from_score
from .data import Dataset, TargetGrid, make_grid

DEFAULT_BINS = 1000
DEFAULT_PAD_FRAC = 0.01
_AUGMENT_STREAM = 0x0CDE


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class InstrumentalDist:
    """Uniform density on [lo, hi]."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise EstimatorError(f"instrumental needs hi > lo, got [{self.lo}, {self.hi}]")

    def pdf(self, y):
        y = np.asarray(y, dtype=float)
        inside = (y >= self.lo) & (y <= self.hi)
        return np.where(inside, 1.0 / (self.hi - self.lo), 0.0)

    def sample(self, size, rng) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=size)


def fit_instrumental(train_targets, pad_frac: float = DEFAULT_PAD_FRAC) -> InstrumentalDist:
    """Uniform instrumental over the training target range, widened by ``pad_frac``.

    ``pad_frac=0`` gives the exact min/max interval.
    """
    t = np.asarray(train_targets, dtype=float)
    lo, hi = float(np.min(t)), float(np.max(t))
    if not hi > lo:
        raise EstimatorError(
            f"fit_instrumental: all training targets equal ({lo}); need at least 2 distinct values"
        )
    pad = pad_frac * (hi - lo)
    return InstrumentalDist(lo - pad, hi + pad)


@dataclass(frozen=True)
class AugmentedDataset:
    """Rows ``(x, y)``; the first n are real (label 1), the next n instrumental (label 0)."""

    features: np.ndarray
    labels: np.ndarray


def build_augmented(ds: Dataset, inst: InstrumentalDist, seed=None) -> AugmentedDataset:
    rng = np.random.default_rng(seed)
    fake = inst.sample(ds.n, rng)
    real = np.column_stack([ds.features, ds.target])
    other = np.column_stack([ds.features, fake])
    labels = np.concatenate([np.ones(ds.n), np.zeros(ds.n)])
    return AugmentedDataset(np.vstack([real, other]), labels)


@dataclass(frozen=True)
class DensityCurve:
    grid: TargetGrid
    values: np.ndarray

    def integral(self) -> float:
        return float(self.grid.integrate(self.values))

    def at(self, y) -> np.ndarray:
        j = self.grid.bin_index(y)
        return np.where(j >= 0, self.values[np.maximum(j, 0)], 0.0)


def normalize_rows(raw: np.ndarray, grid: TargetGrid) -> np.ndarray:
    """Scale each row to integrate to 1 over the grid; all-zero rows become uniform."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    mass = raw.sum(axis=1, keepdims=True) * grid.bin_width
    uniform = 1.0 / (grid.hi - grid.lo)
    safe = np.where(mass > 0, mass, 1.0)
    return np.where(mass > 0, raw / safe, uniform)


@dataclass(frozen=True)
class OcdeModel:
    classifier: BoostedModel
    instrumental: InstrumentalDist
    grid: TargetGrid
    debias_regressor: BoostedModel | None = None
    smooth_components: int | None = field(default=None)

    @property
    def n_features(self) -> int:
        return self.classifier.n_features - 1

    def _check_x(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise EstimatorError(
                f"query has {X.shape[1]} feature columns, model expects {self.n_features}"
            )
        return X

    def odds(self, X, y) -> np.ndarray:
        """Classifier odds p/(1-p) for paired rows of X and y."""
        X = self._check_x(X)
        p = proba_from_score(self.classifier.raw_score(np.column_stack([X, np.ravel(y)])))
        return p / (1.0 - p)

    def raw_density(self, x, y):
        """Unnormalised estimate ``q(y) * p/(1-p)``; zero outside the instrumental support."""
        X = self._check_x(x)
        y = np.atleast_1d(np.asarray(y, dtype=float))
        X = np.broadcast_to(X, (y.shape[0], X.shape[1]))
        out = self.instrumental.pdf(y) * self.odds(X, y)
        return out if out.shape[0] > 1 else float(out[0])

    def raw_on_grid(self, X) -> np.ndarray:
        X = self._check_x(X)
        centers = self.grid.centers
        p = proba_from_score(self.classifier.raw_score_grid(X, centers, self.n_features))
        return self.instrumental.pdf(centers)[None, :] * (p / (1.0 - p))

    def densities(self, X) -> np.ndarray:
        """Normalised histogram densities, one row per query; smoothed if configured."""
        vals = normalize_rows(self.raw_on_grid(X), self.grid)
        if self.smooth_components is not None:
            vals = smooth_values(vals, self.smooth_components, self.grid)
        return vals

    def density_on_grid(self, x) -> DensityCurve:
        return DensityCurve(self.grid, self.densities(x)[0])

    def with_smoothing(self, n_components: int | None) -> "OcdeModel":
        return OcdeModel(self.classifier, self.instrumental, self.grid,
                         self.debias_regressor, n_components)

    def to_dict(self) -> dict:
        return {
            "format": "ocde.model/1",
            "classifier": self.classifier.to_dict(),
            "instrumental": [self.instrumental.lo, self.instrumental.hi],
            "grid": [self.grid.lo, self.grid.hi, self.grid.bins],
            "debias_regressor": None if self.debias_regressor is None
            else self.debias_regressor.to_dict(),
            "smooth_components": self.smooth_components,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OcdeModel":
        if d.get("format") != "ocde.model/1":
            raise EstimatorError(f"unrecognised model format {d.get('format')!r}")
        reg = d.get("debias_regressor")
        return cls(
            BoostedModel.from_dict(d["classifier"]),
            InstrumentalDist(*d["instrumental"]),
            make_grid(*d["grid"]),
            None if reg is None else BoostedModel.from_dict(reg),
            d.get("smooth_components"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "OcdeModel":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise EstimatorError(f"cannot read model {path}: {exc}") from exc


def fit_ocde(train: Dataset, val: Dataset | None, inst: InstrumentalDist,
             grid: TargetGrid | None = None, config: BoostConfig | None = None,
             seed=None) -> OcdeModel:
    """Train the real-vs-instrumental classifier and package it with its grid.

    The validation set, when given, is augmented with its own instrumental draws
    and drives early stopping.
    """
    cfg = config or BoostConfig()
    grid = grid or make_grid(inst.lo, inst.hi, DEFAULT_BINS)
    if isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        # Own spawn key, so streams never coincide with SeedSequence(seed).spawn(...) children
        # a caller may have used to generate the data.
        ss = np.random.SeedSequence(seed, spawn_key=(_AUGMENT_STREAM,))
    train_seed, val_seed = ss.spawn(2)
    aug = build_augmented(train, inst, train_seed)
    if val is not None and val.n > 0:
        vaug = build_augmented(val, inst, val_seed)
        clf = fit_classifier(aug.features, aug.labels, vaug.features, vaug.labels, cfg)
    else:
        clf = fit_classifier(aug.features, aug.labels, config=cfg)
    return OcdeModel(clf, inst, grid)


def raw_density(model: OcdeModel, x, y):
    return model.raw_density(x, y)


def density_on_grid(model: OcdeModel, x) -> DensityCurve:
    return model.with_smoothing(None).density_on_grid(x)


def smooth_values(values: np.ndarray, n_components: int, grid: TargetGrid) -> np.ndarray:
    """Keep the ``n_components`` lowest real-FFT frequencies of each row, clip, renormalise."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    bins = values.shape[1]
    if int(n_components) != n_components or not 1 <= n_components <= bins:
        raise EstimatorError(f"n_components must lie in [1, {bins}], got {n_components}")
    if n_components == 1:
        return np.full_like(values, 1.0 / (grid.hi - grid.lo))
    spec = np.fft.rfft(values, axis=1)
    kept = spec.copy()
    kept[:, int(n_components):] = 0.0
    out = np.fft.irfft(kept, n=bins, axis=1)
    # Parseval: dropping coefficients cannot add energy.
    energy_in = np.sum(values**2, axis=1)
    energy_out = np.sum(out**2, axis=1)
    assert np.all(energy_out <= energy_in * (1 + 1e-9) + 1e-12)
    np.maximum(out, 0.0, out=out)
    return normalize_rows(out, grid)


def smooth_curve(curve: DensityCurve, n_components: int) -> DensityCurve:
    return DensityCurve(curve.grid, smooth_values(curve.values, n_components, curve.grid)[0])


def tune_components(model: OcdeModel, tune_set: Dataset, candidates) -> int:
    """Number of Fourier components with the lowest CDE loss on ``tune_set``.

    Ties go to the smaller count.
    """
    from .evaluation import cde_loss_from_values

    cands = sorted({int(c) for c in candidates})
    if not cands:
        raise EstimatorError("no candidate component counts")
    if cands[0] < 1 or cands[-1] > model.grid.bins:
        raise EstimatorError(f"candidates must lie in [1, {model.grid.bins}]")
    base = normalize_rows(model.raw_on_grid(tune_set.features), model.grid)
    best, best_loss = cands[0], np.inf
    for c in cands:
        loss, _ = cde_loss_from_values(smooth_values(base, c, model.grid),
                                       tune_set.target, model.grid)
        if loss < best_loss:
            best, best_loss = c, loss
    return best
