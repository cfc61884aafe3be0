"""Histogram gradient-boosted decision trees.

Two objectives are supported: ``logistic`` (binary log loss, used as the
probabilistic classifier) and ``squared`` (least squares, used as the point
regressor of the debiased protocol). Trees are grown depth-wise on per-feature
quantile histograms, leaves take one Newton step, and training stops early on a
validation set.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

P_CLIP = 1e-6

OBJECTIVES = ("logistic", "squared")


class BoostingError(ValueError):
    pass


@dataclass(frozen=True)
class BoostConfig:
    """Boosting hyperparameters.

    The defaults stand in for an off-the-shelf library's defaults; only the
    early stopping patience of 50 rounds is taken from the reference protocol.
    """

    max_trees: int = 500
    learning_rate: float = 0.1
    max_depth: int = 6
    min_samples_leaf: int = 20
    early_stopping_rounds: int = 50
    histogram_bins_per_feature: int = 64
    l2_reg: float = 3.0
    seed: int = 0

    def __post_init__(self):
        if self.max_trees < 1:
            raise BoostingError(f"max_trees must be >= 1, got {self.max_trees}")
        if not 0.0 < self.learning_rate <= 1.0:
            raise BoostingError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.max_depth < 1:
            raise BoostingError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise BoostingError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if self.early_stopping_rounds < 0:
            raise BoostingError("early_stopping_rounds must be >= 0")
        if not 2 <= self.histogram_bins_per_feature <= 65536:
            raise BoostingError("histogram_bins_per_feature must lie in [2, 65536]")
        if self.l2_reg < 0:
            raise BoostingError("l2_reg must be >= 0")


@dataclass(frozen=True)
class Tree:
    """Axis-aligned regression tree; ``feature == -1`` marks a leaf.

    A row goes left when ``x[feature] <= threshold``. Leaf values already
    include the learning rate.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            go_left = X[rows, np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)


@dataclass(frozen=True)
class BoostedModel:
    trees: tuple[Tree, ...]
    base_score: float
    objective: str
    n_features: int
    config: BoostConfig = BoostConfig()

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise BoostingError(f"unknown objective {self.objective!r}")
        object.__setattr__(self, "trees", tuple(self.trees))
        object.__setattr__(self, "_packed", _pack(self.trees))

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def truncate(self, n_trees: int) -> "BoostedModel":
        return BoostedModel(self.trees[:n_trees], self.base_score, self.objective,
                            self.n_features, self.config)

    def _check_width(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise BoostingError(
                f"expected {self.n_features} feature columns, got {X.shape[-1]}"
            )
        return X

    def raw_score(self, X) -> np.ndarray:
        X = self._check_width(X)
        out = np.full(X.shape[0], self.base_score, dtype=np.float64)
        _score_rows(X, *self._packed, out)
        return out

    def raw_score_grid(self, X, grid_values, grid_feature: int) -> np.ndarray:
        """Scores of every (row of X, grid value) pair, shape ``(len(X), len(grid_values))``.

        ``X`` holds all columns except ``grid_feature``; the grid value is
        slotted in as that column, so the result equals ``raw_score`` on the
        expanded matrix without materialising it.
        """
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        if X.shape[1] != self.n_features - 1:
            raise BoostingError(
                f"expected {self.n_features - 1} feature columns, got {X.shape[1]}"
            )
        ys = np.ascontiguousarray(grid_values, dtype=np.float64)
        out = np.full((X.shape[0], ys.shape[0]), self.base_score, dtype=np.float64)
        _score_grid(X, ys, grid_feature, *self._packed, out)
        return out

    def predict(self, X) -> np.ndarray:
        if self.objective != "squared":
            raise BoostingError("predict() is for squared-loss models; use predict_proba")
        return self.raw_score(X)

    def predict_proba(self, X) -> np.ndarray:
        if self.objective != "logistic":
            raise BoostingError("predict_proba() needs a logistic model")
        return proba_from_score(self.raw_score(X))

    def to_dict(self) -> dict:
        return {
            "format": "ocde.boosted_model/1",
            "objective": self.objective,
            "base_score": self.base_score,
            "n_features": self.n_features,
            "config": asdict(self.config),
            "trees": [
                {
                    "feature": t.feature.tolist(),
                    "threshold": t.threshold.tolist(),
                    "left": t.left.tolist(),
                    "right": t.right.tolist(),
                    "value": t.value.tolist(),
                }
                for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        if d.get("format") != "ocde.boosted_model/1":
            raise BoostingError(f"unrecognised model format {d.get('format')!r}")
        trees = [
            Tree(
                np.asarray(t["feature"], dtype=np.int64),
                np.asarray(t["threshold"], dtype=np.float64),
                np.asarray(t["left"], dtype=np.int64),
                np.asarray(t["right"], dtype=np.int64),
                np.asarray(t["value"], dtype=np.float64),
            )
            for t in d["trees"]
        ]
        return cls(trees, float(d["base_score"]), d["objective"], int(d["n_features"]),
                   BoostConfig(**d["config"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "BoostedModel":
        return cls.from_dict(json.loads(text))


def _pack(trees):
    """Concatenate trees into flat node arrays with global child indices."""
    if not trees:
        z = np.zeros(0, dtype=np.int64)
        return z, np.zeros(0), z, z, np.zeros(0), z
    offsets = np.cumsum([0] + [t.n_nodes for t in trees[:-1]])
    feature = np.concatenate([t.feature for t in trees]).astype(np.int64)
    threshold = np.concatenate([t.threshold for t in trees]).astype(np.float64)
    left = np.concatenate([np.where(t.left >= 0, t.left + o, -1) for t, o in zip(trees, offsets)])
    right = np.concatenate([np.where(t.right >= 0, t.right + o, -1) for t, o in zip(trees, offsets)])
    value = np.concatenate([t.value for t in trees]).astype(np.float64)
    return feature, threshold, left.astype(np.int64), right.astype(np.int64), value, offsets.astype(np.int64)


@njit(cache=True)
def _score_rows(X, feature, threshold, left, right, value, roots, out):
    for i in range(X.shape[0]):
        s = 0.0
        for t in range(roots.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            s += value[node]
        out[i] += s


@njit(cache=True)
def _score_grid(X, ys, yfeat, feature, threshold, left, right, value, roots, out):
    for i in range(X.shape[0]):
        for j in range(ys.shape[0]):
            s = 0.0
            for t in range(roots.shape[0]):
                node = roots[t]
                while feature[node] >= 0:
                    f = feature[node]
                    if f == yfeat:
                        v = ys[j]
                    elif f < yfeat:
                        v = X[i, f]
                    else:
                        v = X[i, f - 1]
                    if v <= threshold[node]:
                        node = left[node]
                    else:
                        node = right[node]
                s += value[node]
            out[i, j] += s


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                    np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def proba_from_score(score) -> np.ndarray:
    return np.clip(sigmoid(score), P_CLIP, 1.0 - P_CLIP)


def log_loss(probs, labels) -> float:
    p = np.asarray(probs, dtype=float)
    y = np.asarray(labels, dtype=float)
    if p.shape != y.shape:
        raise BoostingError(f"length mismatch: {p.shape} probabilities vs {y.shape} labels")
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p)))


def _rmse(pred, y) -> float:
    return float(np.sqrt(np.mean((pred - y) ** 2)))


def _bin_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    u = np.unique(col)
    if u.shape[0] <= max_bins:
        return (u[:-1] + u[1:]) / 2.0
    qs = np.quantile(col, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(qs)


def _check_xy(X, y, what="features"):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != y.shape[0]:
        raise BoostingError(f"{what}: {X.shape[0]} rows but {y.shape[0]} targets")
    if not np.all(np.isfinite(X)):
        raise BoostingError(f"{what} contain non-finite values")
    if not np.all(np.isfinite(y)):
        raise BoostingError(f"{what}: targets contain non-finite values")
    return X, y


def _grow_tree(codes, edges, g, h, cfg: BoostConfig, n_bins: int) -> tuple[Tree, np.ndarray]:
    """Grow one tree on binned features; returns the tree and each row's leaf."""
    n, m = codes.shape
    B = n_bins
    lam = cfg.l2_reg
    msl = cfg.min_samples_leaf
    feature, bin_at, left, right = [-1], [0], [-1], [-1]
    node_of = np.zeros(n, dtype=np.intp)
    frontier = [0]
    feat_offsets = (np.arange(m) * B)[None, :]
    for _ in range(cfg.max_depth):
        if not frontier:
            break
        L = len(frontier)
        local = np.full(len(feature), -1, dtype=np.intp)
        local[frontier] = np.arange(L)
        loc = local[node_of]
        act = np.flatnonzero(loc >= 0)
        keys = ((loc[act] * (m * B))[:, None] + feat_offsets + codes[act]).ravel()
        size = L * m * B
        ga = np.repeat(g[act], m)
        ha = np.repeat(h[act], m)
        Gh = np.bincount(keys, weights=ga, minlength=size).reshape(L, m, B)
        Hh = np.bincount(keys, weights=ha, minlength=size).reshape(L, m, B)
        Ch = np.bincount(keys, minlength=size).reshape(L, m, B)
        G = Gh[:, 0, :].sum(axis=1)[:, None, None]
        H = Hh[:, 0, :].sum(axis=1)[:, None, None]
        C = Ch[:, 0, :].sum(axis=1)[:, None, None]
        GL = np.cumsum(Gh, axis=2)[:, :, :-1]
        HL = np.cumsum(Hh, axis=2)[:, :, :-1]
        CL = np.cumsum(Ch, axis=2)[:, :, :-1]
        GR, HR, CR = G - GL, H - HL, C - CL
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam)
        gain = np.where((CL >= msl) & (CR >= msl) & np.isfinite(gain), gain, -np.inf)
        flat = gain.reshape(L, -1)
        best = np.argmax(flat, axis=1)
        best_gain = flat[np.arange(L), best]
        new_frontier = []
        split_f = np.full(L, -1, dtype=np.intp)
        split_b = np.zeros(L, dtype=np.intp)
        left_id = np.zeros(L, dtype=np.intp)
        right_id = np.zeros(L, dtype=np.intp)
        for k, node in enumerate(frontier):
            if not best_gain[k] > 0.0:
                continue
            f, b = divmod(int(best[k]), B - 1)
            feature[node], bin_at[node] = f, b
            left[node], right[node] = len(feature), len(feature) + 1
            feature += [-1, -1]
            bin_at += [0, 0]
            left += [-1, -1]
            right += [-1, -1]
            split_f[k], split_b[k] = f, b
            left_id[k], right_id[k] = left[node], right[node]
            new_frontier += [left[node], right[node]]
        if not new_frontier:
            break
        la = loc[act]
        moving = split_f[la] >= 0
        rows = act[moving]
        lm = la[moving]
        go_left = codes[rows, split_f[lm]] <= split_b[lm]
        node_of[rows] = np.where(go_left, left_id[lm], right_id[lm])
        frontier = new_frontier
    n_nodes = len(feature)
    Gn = np.bincount(node_of, weights=g, minlength=n_nodes)
    Hn = np.bincount(node_of, weights=h, minlength=n_nodes)
    feature_arr = np.asarray(feature, dtype=np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = np.where(feature_arr < 0, -cfg.learning_rate * Gn / (Hn + lam), 0.0)
    value = np.where(np.isfinite(value), value, 0.0)
    threshold = np.array(
        [edges[f][b] if f >= 0 else 0.0 for f, b in zip(feature, bin_at)], dtype=np.float64
    )
    tree = Tree(feature_arr, threshold, np.asarray(left, dtype=np.int64),
                np.asarray(right, dtype=np.int64), value)
    return tree, node_of


def _boost(X, y, Xv, yv, cfg: BoostConfig, objective: str) -> BoostedModel:
    n, m = X.shape
    edges = [_bin_edges(X[:, j], cfg.histogram_bins_per_feature) for j in range(m)]
    n_bins = max(2, max(e.shape[0] + 1 for e in edges))
    code_dtype = np.uint8 if n_bins <= 256 else np.uint16
    codes = np.column_stack(
        [np.searchsorted(e, X[:, j], side="left") for j, e in enumerate(edges)]
    ).astype(code_dtype)

    if objective == "logistic":
        pbar = float(np.mean(y))
        base = math.log(pbar / (1.0 - pbar))
    else:
        base = float(np.mean(y))

    def val_metric(score):
        if objective == "logistic":
            return log_loss(proba_from_score(score), yv)
        return _rmse(score, yv)

    use_val = Xv is not None and Xv.shape[0] > 0
    F = np.full(n, base)
    Fv = np.full(Xv.shape[0], base) if use_val else None
    best_metric = val_metric(Fv) if use_val else math.inf
    best_round = 0
    patience = cfg.early_stopping_rounds
    trees: list[Tree] = []
    for r in range(1, cfg.max_trees + 1):
        if objective == "logistic":
            p = sigmoid(F)
            g, h = p - y, p * (1.0 - p)
        else:
            g, h = F - y, np.ones(n)
        tree, leaf = _grow_tree(codes, edges, g, h, cfg, n_bins)
        trees.append(tree)
        F = F + tree.value[leaf]
        if use_val:
            Fv = Fv + tree.value[tree.apply(Xv)]
            metric = val_metric(Fv)
            if metric < best_metric:
                best_metric, best_round = metric, r
            elif patience > 0 and r - best_round >= patience:
                break
    if patience > 0:
        trees = trees[:best_round]
    return BoostedModel(trees, base, objective, m, cfg)


def fit_classifier(features, labels, val_features=None, val_labels=None,
                   config: BoostConfig | None = None) -> BoostedModel:
    """Boosted trees on binary log loss with early stopping on validation log loss."""
    cfg = config or BoostConfig()
    X, y = _check_xy(features, labels)
    if not np.all((y == 0) | (y == 1)):
        raise BoostingError("labels must be 0 or 1")
    if y.min() == y.max():
        raise BoostingError("labels contain a single class; both 0 and 1 are required")
    Xv, yv = _val_arrays(val_features, val_labels, cfg, X.shape[1])
    return _boost(X, y, Xv, yv, cfg, "logistic")


def fit_regressor(features, targets, val_features=None, val_targets=None,
                  config: BoostConfig | None = None) -> BoostedModel:
    """Boosted trees on squared loss with early stopping on validation RMSE."""
    cfg = config or BoostConfig()
    X, y = _check_xy(features, targets)
    if X.shape[0] < 2:
        raise BoostingError("regressor needs at least 2 rows")
    Xv, yv = _val_arrays(val_features, val_targets, cfg, X.shape[1])
    return _boost(X, y, Xv, yv, cfg, "squared")


def _val_arrays(Xv, yv, cfg, m):
    if Xv is None or len(Xv) == 0:
        if cfg.early_stopping_rounds > 0:
            raise BoostingError("early stopping needs a nonempty validation set")
        return None, None
    Xv, yv = _check_xy(Xv, yv, what="validation features")
    if Xv.shape[1] != m:
        raise BoostingError(f"validation has {Xv.shape[1]} columns, training has {m}")
    return Xv, yv


def predict_proba(model: BoostedModel, features) -> np.ndarray:
    return model.predict_proba(features)
