from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from detector.models.schemas import ErtParams, GbtParams, LearnerKind, LrParams
from detector.services.learners import feature_importances, fit_model, score_model
from detector.services.learners.base import SCORE_EPS
from detector.services.learners.boosting import (
    GbtEnsemble,
    gbt_fit,
    gbt_score,
    grow_boosted_tree,
    leaf_weight,
    split_gain,
)
from detector.services.learners.extra_trees import ExtraTreesForest, ert_fit, ert_score, grow_extra_tree
from detector.services.learners.linear import LinearModel, lr_fit, lr_loss_and_grad, lr_score
from detector.services.learners.trees import LEAF, TreeArrays
from detector.services.metrics import roc_auc
from detector.utils.errors import DimensionMismatch, SingleClassTraining


def _leaf(value: float) -> TreeArrays:
    return TreeArrays(
        feature=np.array([LEAF]),
        threshold=np.array([0.0]),
        left=np.array([LEAF]),
        right=np.array([LEAF]),
        value=np.array([value]),
        n_samples=np.array([1]),
        gain=np.array([0.0]),
    )


@pytest.fixture
def separable(matrix):
    return matrix([-1.0, -0.5, 0.5, 1.0], [0, 0, 1, 1])


@pytest.fixture
def circle(matrix):
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(300, 3))
    y = ((X[:, 0] ** 2 + X[:, 1] ** 2) < 0.4).astype(int)
    return matrix(X, y)


# ── logistic regression ───────────────────────────────

def test_lr_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    for _ in range(100):
        n, d = int(rng.integers(2, 21)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        w, b, l2 = rng.normal(size=d), float(rng.normal()), float(rng.uniform(0, 0.5))

        _, grad_w, grad_b = lr_loss_and_grad(w, b, X, y, l2)
        for j in range(d):
            step = np.zeros(d)
            step[j] = h
            numeric = (lr_loss_and_grad(w + step, b, X, y, l2)[0] - lr_loss_and_grad(w - step, b, X, y, l2)[0]) / (2 * h)
            assert abs(grad_w[j] - numeric) / max(abs(grad_w[j]) + abs(numeric), 1e-3) < 1e-5
        numeric_b = (lr_loss_and_grad(w, b + h, X, y, l2)[0] - lr_loss_and_grad(w, b - h, X, y, l2)[0]) / (2 * h)
        assert abs(grad_b - numeric_b) / max(abs(grad_b) + abs(numeric_b), 1e-3) < 1e-5


def test_lr_single_example_gradient():
    _, grad_w, grad_b = lr_loss_and_grad(np.zeros(1), 0.0, np.array([[1.0]]), np.array([1.0]), 0.0)
    assert grad_w[0] == -0.5
    assert grad_b == -0.5


def test_lr_zero_epochs_scores_one_half(separable):
    model = lr_fit(separable, LrParams(epochs=0), seed=0)
    np.testing.assert_array_equal(model.weights, [0.0])
    assert model.bias == 0.0
    np.testing.assert_array_equal(lr_score(model, separable).scores, 0.5)


def test_lr_separable_ranks_perfectly(separable):
    model = lr_fit(separable, LrParams(epochs=200), seed=0)
    scores = lr_score(model, separable).scores
    assert roc_auc(scores, separable.labels) == 1.0
    assert scores[2] > scores[1]


def test_lr_bias_pushes_scores_to_one(separable):
    model = LinearModel(
        weights=np.zeros(1), bias=10.0, means=np.zeros(1), stds=np.ones(1), params=LrParams(), seed=0
    )
    assert (lr_score(model, separable).scores > 0.9999).all()


def test_lr_loss_decreases_below_stability_bound(matrix):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 2))
    y = (X[:, 0] + 0.5 * rng.normal(size=20) > 0).astype(int)
    m = matrix(X, y)
    Xs = (X - X.mean(axis=0)) / X.std(axis=0)
    l2 = 1e-3
    bound = 1.0 / (len(y) * ((np.square(Xs).sum(axis=1).max() + 1.0) / 4 + l2))
    model = lr_fit(m, LrParams(learning_rate=0.5 * bound, l2=l2, epochs=10), seed=1)
    history = model.loss_history
    assert history[-1] < math.log(2)
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))


def test_lr_is_deterministic(circle):
    a = lr_fit(circle, LrParams(), seed=3)
    b = lr_fit(circle, LrParams(), seed=3)
    np.testing.assert_array_equal(a.weights, b.weights)
    assert a.bias == b.bias


def test_single_class_training_rejected(matrix):
    m = matrix([1.0, 2.0, 3.0], [1, 1, 1])
    for kind, params in [(LearnerKind.lr, LrParams()), (LearnerKind.ert, ErtParams(n_trees=2)), (LearnerKind.gbt, GbtParams(rounds=2))]:
        with pytest.raises(SingleClassTraining):
            fit_model(kind, m, params, seed=0)


def test_scoring_checks_width(separable, matrix):
    model = lr_fit(separable, LrParams(epochs=1), seed=0)
    with pytest.raises(DimensionMismatch):
        lr_score(model, matrix([[1.0, 2.0]], [0]))


# ── extremely randomized trees ────────────────────────

def test_ert_pure_node_is_a_leaf():
    X = np.array([[0.0], [1.0], [2.0]])
    tree_rng = np.random.default_rng(0)
    tree = grow_extra_tree(X, np.ones(3), 1, 1, tree_rng)
    assert tree.n_nodes == 1
    assert tree.value[0] == 1.0


def test_ert_one_dimensional_perfect_split(matrix):
    m = matrix([0.0, 0.0, 1.0, 1.0, 0.0, 1.0], [0, 0, 1, 1, 0, 1])
    forest = ert_fit(m, ErtParams(n_trees=10, min_samples_leaf=1), seed=0)
    assert roc_auc(ert_score(forest, m).scores, m.labels) == 1.0
    for tree in forest.trees:
        assert tree.feature[0] == 0
        assert 0.0 < tree.threshold[0] < 1.0


def test_ert_threads_do_not_change_the_forest(circle):
    hp = ErtParams(n_trees=16)
    one = ert_fit(circle, hp, seed=5, threads=1)
    eight = ert_fit(circle, hp, seed=5, threads=8)
    for a, b in zip(one.trees, eight.trees):
        np.testing.assert_array_equal(a.feature, b.feature)
        np.testing.assert_array_equal(a.threshold, b.threshold)
        np.testing.assert_array_equal(a.value, b.value)


def _replay(tree: TreeArrays, X: np.ndarray):
    """Yield (node, rows reaching it) by descending the stored splits."""
    stack = [(0, np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        yield node, rows
        if tree.feature[node] != LEAF:
            left = X[rows, tree.feature[node]] <= tree.threshold[node]
            stack.append((tree.left[node], rows[left]))
            stack.append((tree.right[node], rows[~left]))


def test_ert_thresholds_lie_inside_node_range(circle):
    forest = ert_fit(circle, ErtParams(n_trees=5, min_samples_leaf=2), seed=2)
    X = circle.values
    for tree in forest.trees:
        for node, rows in _replay(tree, X):
            assert tree.n_samples[node] == len(rows)
            if tree.feature[node] == LEAF:
                assert 0.0 <= tree.value[node] <= 1.0
                continue
            column = X[rows, tree.feature[node]]
            assert column.min() < tree.threshold[node] < column.max()
            assert tree.left[node] != LEAF and tree.right[node] != LEAF


def test_ert_min_samples_leaf(circle):
    forest = ert_fit(circle, ErtParams(n_trees=3, min_samples_leaf=7), seed=1)
    for tree in forest.trees:
        assert tree.n_samples[tree.feature == LEAF].min() >= 7


def test_ert_score_averages_leaves(separable):
    single = ExtraTreesForest(trees=[_leaf(0.75)], params=ErtParams(n_trees=1), n_features=1, seed=0)
    np.testing.assert_allclose(ert_score(single, separable).scores, 0.75)

    pair = ExtraTreesForest(trees=[_leaf(0.2), _leaf(0.6)], params=ErtParams(n_trees=2), n_features=1, seed=0)
    np.testing.assert_allclose(ert_score(pair, separable).scores, 0.4)

    pure = ExtraTreesForest(trees=[_leaf(1.0)] * 3, params=ErtParams(n_trees=3), n_features=1, seed=0)
    np.testing.assert_array_equal(ert_score(pure, separable).scores, 1.0 - SCORE_EPS)


# ── gradient boosting ─────────────────────────────────

def test_gbt_zero_rounds_returns_prior(matrix):
    m = matrix([0.0, 1.0, 2.0, 3.0], [1, 0, 0, 0])
    ensemble = gbt_fit(m, GbtParams(rounds=0), seed=0)
    np.testing.assert_allclose(gbt_score(ensemble, m).scores, 0.25, rtol=0, atol=1e-12)


def test_gain_fixture():
    assert float(split_gain(-2.0, 1.0, 1.0, 1.0, 1.0, 0.0)) == pytest.approx(13 / 12, abs=1e-12)


def test_leaf_weight_fixture():
    assert leaf_weight(0.5, 0.25, 1.0, 1.0) == pytest.approx(-0.4, abs=1e-15)


def test_depth_zero_round_matches_brute_force(circle):
    hp = GbtParams(rounds=1, max_depth=0, learning_rate=0.3, l2=1.0)
    ensemble = gbt_fit(circle, hp, seed=0)
    assert len(ensemble.trees) == 1 and ensemble.trees[0].n_nodes == 1

    p = 1.0 / (1.0 + math.exp(-ensemble.base_score))
    G = H = 0.0
    for label in circle.labels.tolist():
        G += p - label
        H += p * (1.0 - p)
    assert ensemble.trees[0].value[0] == pytest.approx(-0.3 * G / (H + 1.0), abs=1e-12)

    rng = np.random.default_rng(3)
    g, h = rng.normal(size=50), rng.uniform(0.05, 0.25, size=50)
    tree = grow_boosted_tree(rng.normal(size=(50, 2)), g, h, hp)
    assert tree.value[0] == pytest.approx(-0.3 * math.fsum(g) / (math.fsum(h) + 1.0), rel=1e-12)


def test_gbt_training_loss_never_increases(circle):
    hp = GbtParams(rounds=25, max_depth=3, learning_rate=0.3, min_split_gain=0.0, min_child_weight=0.0)
    history = gbt_fit(circle, hp, seed=0).loss_history
    assert len(history) == 26
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert history[-1] < history[0]


def test_gbt_margins_are_additive(circle):
    ensemble = gbt_fit(circle, GbtParams(rounds=2, max_depth=2), seed=0)
    X = circle.values
    first = replace(ensemble, trees=ensemble.trees[:1])
    np.testing.assert_allclose(ensemble.margin(X), first.margin(X) + ensemble.trees[1].predict(X), rtol=0, atol=1e-12)


def test_gbt_empty_and_uniform_trees(separable):
    empty = GbtEnsemble(base_score=0.3, trees=[], params=GbtParams(rounds=0), n_features=1, seed=0)
    np.testing.assert_allclose(gbt_score(empty, separable).scores, 1 / (1 + math.exp(-0.3)))
    uniform = replace(empty, trees=[_leaf(-0.7)])
    np.testing.assert_allclose(gbt_score(uniform, separable).scores, 1 / (1 + math.exp(0.4)))


def test_trees_learn_the_circle(circle):
    gbt = gbt_fit(circle, GbtParams(rounds=50, max_depth=3), seed=0)
    assert roc_auc(gbt_score(gbt, circle).scores, circle.labels) > 0.95
    forest = ert_fit(circle, ErtParams(n_trees=30), seed=0)
    assert roc_auc(ert_score(forest, circle).scores, circle.labels) > 0.95


# ── shared surface ────────────────────────────────────

@pytest.mark.parametrize(
    "kind, params",
    [(LearnerKind.lr, LrParams(epochs=3)), (LearnerKind.ert, ErtParams(n_trees=5)), (LearnerKind.gbt, GbtParams(rounds=5))],
)
def test_scores_stay_inside_unit_interval(circle, kind, params):
    model = fit_model(kind, circle, params, seed=0)
    scores = score_model(model, circle).scores
    assert ((scores > 0) & (scores < 1)).all()


def test_importances_rank_informative_columns(circle):
    model = fit_model(LearnerKind.gbt, circle, GbtParams(rounds=20, max_depth=3), seed=0)
    ranked = feature_importances(model, circle.column_names)
    assert {ranked[0][0], ranked[1][0]} == {"c0", "c1"}
    assert sum(v for _, v in ranked) == pytest.approx(1.0)
