import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocde.boosting import (
    P_CLIP,
    BoostConfig,
    BoostedModel,
    BoostingError,
    fit_classifier,
    fit_regressor,
    log_loss,
    predict_proba,
)


def _stump_model(score):
    return BoostedModel([], score, "logistic", 1)


@pytest.mark.parametrize("score,expected", [(0.0, 0.5), (40.0, 1 - 1e-6), (math.log(3), 0.75),
                                            (-40.0, 1e-6)])
def test_predict_proba_sigmoid_and_clip(score, expected):
    p = predict_proba(_stump_model(score), np.zeros((1, 1)))
    assert p[0] == pytest.approx(expected, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("probs,labels,expected", [
    ([0.5, 0.5], [1, 0], math.log(2)),
    ([1 - 1e-6], [1], -math.log(1 - 1e-6)),
    ([0.75], [0], math.log(4)),
])
def test_log_loss_examples(probs, labels, expected):
    assert log_loss(probs, labels) == pytest.approx(expected, rel=1e-12)


def test_log_loss_length_mismatch():
    with pytest.raises(BoostingError):
        log_loss([0.5], [1, 0])


def _blobs(rng, n=500, dist=3.0):
    c = dist / np.sqrt(2)
    X = np.vstack([rng.normal(size=(n, 2)), rng.normal(size=(n, 2)) + c])
    return X, np.r_[np.zeros(n), np.ones(n)]


def test_fixed_tree_count_without_early_stopping(rng):
    X, y = _blobs(rng)
    m = fit_classifier(X, y, config=BoostConfig(max_trees=5, early_stopping_rounds=0))
    assert m.n_trees == 5


def test_classifier_errors(rng):
    X, y = _blobs(rng, 50)
    with pytest.raises(BoostingError, match="single class"):
        fit_classifier(X, np.ones(len(y)), config=BoostConfig(early_stopping_rounds=0))
    Xbad = X.copy()
    Xbad[0, 0] = np.nan
    with pytest.raises(BoostingError, match="non-finite"):
        fit_classifier(Xbad, y, config=BoostConfig(early_stopping_rounds=0))
    with pytest.raises(BoostingError, match="validation"):
        fit_classifier(X, y, config=BoostConfig(early_stopping_rounds=5))


def test_prediction_width_and_objective_checks(rng):
    X, y = _blobs(rng, 50)
    m = fit_classifier(X, y, config=BoostConfig(max_trees=3, early_stopping_rounds=0))
    with pytest.raises(BoostingError, match="expected 2"):
        m.predict_proba(np.zeros((4, 3)))
    r = fit_regressor(X, y, config=BoostConfig(max_trees=3, early_stopping_rounds=0))
    with pytest.raises(BoostingError):
        r.predict_proba(X)


def test_training_loss_monotone(rng):
    X, y = _blobs(rng, 400, dist=2.0)
    m = fit_classifier(X, y, config=BoostConfig(max_trees=60, early_stopping_rounds=0))
    losses = [log_loss(m.truncate(k).predict_proba(X), y) for k in range(m.n_trees + 1)]
    assert np.all(np.diff(losses) <= 1e-9)


def test_early_stopping_returns_best_prefix(rng):
    X, y = _blobs(rng, 300, dist=1.0)
    Xv, yv = _blobs(rng, 300, dist=1.0)
    esr = 10
    cfg = BoostConfig(max_trees=300, early_stopping_rounds=esr, min_samples_leaf=5)
    m = fit_classifier(X, y, Xv, yv, cfg)
    best = log_loss(m.predict_proba(Xv), yv)
    full = fit_classifier(X, y, config=BoostConfig(max_trees=m.n_trees + esr, early_stopping_rounds=0,
                                                   min_samples_leaf=5))
    for k in range(m.n_trees + esr + 1):
        assert best <= log_loss(full.truncate(k).predict_proba(Xv), yv) + 1e-15
    assert m.n_trees < 300


def test_determinism_and_round_trip(rng):
    X, y = _blobs(rng, 300, dist=1.5)
    cfg = BoostConfig(max_trees=40, early_stopping_rounds=0, seed=3)
    a, b = fit_classifier(X, y, config=cfg), fit_classifier(X, y, config=cfg)
    Q = rng.normal(size=(200, 2))
    np.testing.assert_array_equal(a.raw_score(Q), b.raw_score(Q))
    c = BoostedModel.loads(a.dumps())
    np.testing.assert_array_equal(a.raw_score(Q), c.raw_score(Q))
    assert c.config == cfg


def test_grid_scoring_matches_expanded_rows(rng):
    X = rng.normal(size=(600, 3))
    y = (X[:, 1] + 0.3 * rng.normal(size=600) > 0).astype(float)
    m = fit_classifier(X, y, config=BoostConfig(max_trees=20, early_stopping_rounds=0,
                                                min_samples_leaf=5))
    Q = rng.normal(size=(4, 2))
    grid = np.linspace(-3, 3, 50)
    for feat in range(3):
        S = m.raw_score_grid(Q, grid, feat)
        for i in range(4):
            full = np.insert(np.repeat(Q[i:i + 1], 50, axis=0), feat, grid, axis=1)
            np.testing.assert_array_equal(S[i], m.raw_score(full))


def test_stump_matches_exhaustive_split_search(rng):
    """A depth-1 tree picks the gain-maximising threshold found by brute force."""
    n = 60
    X = rng.normal(size=(n, 2))
    y = rng.normal(size=n) + 2.0 * (X[:, 1] > 0.3)
    lam, msl = 1.0, 3
    cfg = BoostConfig(max_trees=1, max_depth=1, min_samples_leaf=msl, early_stopping_rounds=0,
                      learning_rate=1.0, l2_reg=lam, histogram_bins_per_feature=256)
    m = fit_regressor(X, y, config=cfg)
    g = np.mean(y) - y

    def score(mask):
        return g[mask].sum() ** 2 / (mask.sum() + lam)

    best = (-np.inf, None, None)
    for f in range(2):
        vals = np.unique(X[:, f])
        for t in (vals[:-1] + vals[1:]) / 2:
            left = X[:, f] <= t
            if left.sum() < msl or (~left).sum() < msl:
                continue
            gain = score(left) + score(~left) - score(np.ones(n, bool))
            if gain > best[0] + 1e-12:
                best = (gain, f, t)
    tree = m.trees[0]
    assert tree.feature[0] == best[1]
    assert tree.threshold[0] == pytest.approx(best[2], rel=1e-12)
    left = X[:, best[1]] <= best[2]
    np.testing.assert_allclose(m.predict(X[left][:1]), np.mean(y) - g[left].sum() / (left.sum() + lam))


def test_regressor_constant_targets():
    X = np.random.default_rng(0).normal(size=(100, 3))
    m = fit_regressor(X[:80], np.full(80, 3.0), X[80:], np.full(20, 3.0))
    assert m.base_score == 3.0
    np.testing.assert_array_equal(m.predict(X), 3.0)


def test_regressor_learns_identity(rng):
    x = rng.uniform(size=(1000, 1))
    xv, xt = rng.uniform(size=(250, 1)), rng.uniform(size=(500, 1))
    m = fit_regressor(x, x[:, 0], xv, xv[:, 0], BoostConfig(max_depth=1))
    rmse = np.sqrt(np.mean((m.predict(xt) - xt[:, 0]) ** 2))
    assert rmse < 0.1


def test_zero_trees_rejected():
    with pytest.raises(BoostingError):
        BoostConfig(max_trees=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_probabilities_always_clipped(seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(200, 2))
    y = (X[:, 0] > 0).astype(float)
    m = fit_classifier(X, y, config=BoostConfig(max_trees=30, early_stopping_rounds=0,
                                                learning_rate=1.0, l2_reg=0.0, min_samples_leaf=1))
    p = m.predict_proba(r.normal(size=(500, 2)) * 10)
    assert p.min() >= P_CLIP and p.max() <= 1 - P_CLIP
