"""Forest and boosting behavior on top of the tree grower."""

import numpy as np
import pytest

from treeval.cart import TreeConfig, fit_tree, predict_tree
from treeval.ensemble import (BoostConfig, ForestConfig, fit_boost,
                              fit_forest, predict)
from treeval.paths import sample_driver


@pytest.fixture(scope="module")
def toy():
    x = sample_driver(120, 2, 2, seed=21)
    y = np.sin(x.flat() @ np.array([1.0, 0.5, -0.7, 0.2]))
    return x, y


def test_forest_prediction_is_tree_average(toy):
    x, y = toy
    ff = fit_forest(x, y, ForestConfig(n_trees=7, nodesize=10, seed=3))
    manual = np.mean([predict_tree(t, x) for t in ff.trees], axis=0)
    np.testing.assert_array_equal(predict(ff, x), manual)
    assert len(ff.trees) == 7
    assert ff.n_cells == sum(t.n_leaves for t in ff.trees)


def test_forest_full_subsample_without_replacement_equals_single_tree(toy):
    # drawing all n rows without replacement is a permutation, and the
    # greedy grower is permutation invariant on distinct inputs
    x, y = toy
    cfg = ForestConfig(n_trees=1, nodesize=10, sampling="subsample_without",
                       n_resample=120, seed=5)
    ff = fit_forest(x, y, cfg)
    tree = fit_tree(x, y, TreeConfig(nodesize=10))
    pts = sample_driver(300, 2, 2, seed=22)
    np.testing.assert_allclose(predict(ff, pts), predict_tree(tree, pts),
                               rtol=0, atol=1e-12)


def test_forest_bootstrap_trees_differ(toy):
    x, y = toy
    ff = fit_forest(x, y, ForestConfig(n_trees=2, nodesize=10, seed=1))
    a, b = ff.trees
    same = (a.n_nodes == b.n_nodes and (a.feature == b.feature).all()
            and np.array_equal(a.threshold, b.threshold, equal_nan=True))
    assert not same


def test_forest_refit_is_deterministic(toy):
    x, y = toy
    cfg = ForestConfig(n_trees=4, nodesize=10, features=2, seed=9)
    p1 = predict(fit_forest(x, y, cfg), x)
    p2 = predict(fit_forest(x, y, cfg), x)
    np.testing.assert_array_equal(p1, p2)


def test_forest_seed_changes_fit(toy):
    x, y = toy
    p1 = predict(fit_forest(x, y, ForestConfig(n_trees=3, nodesize=10, seed=1)), x)
    p2 = predict(fit_forest(x, y, ForestConfig(n_trees=3, nodesize=10, seed=2)), x)
    assert not np.array_equal(p1, p2)


def test_forest_config_validation():
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)
    with pytest.raises(ValueError):
        ForestConfig(sampling="jackknife")
    with pytest.raises(ValueError):
        ForestConfig(sampling="subsample_with")  # needs n_resample
    with pytest.raises(ValueError):
        fit_forest(np.zeros((4, 1, 1)), np.zeros(4),
                   ForestConfig(sampling="subsample_without", n_resample=9))
    with pytest.raises(ValueError):
        fit_forest(np.zeros((4, 1, 1)), np.zeros(4),
                   ForestConfig(sampling="bootstrap", n_resample=3))


def test_boost_single_full_step_interpolates(toy):
    # learning_rate 1 with an exact residual tree reproduces y in one round
    x, y = toy
    boost = fit_boost(x, y, BoostConfig(rounds=1, learning_rate=1.0,
                                        nodesize=2, max_depth=None))
    np.testing.assert_allclose(predict(boost, x), y, rtol=0, atol=1e-12)
    assert boost.n_rounds == 1
    assert boost.gammas[0] == pytest.approx(1.0, rel=1e-12)


def test_boost_base_value_is_response_mean(toy):
    x, y = toy
    boost = fit_boost(x, y, BoostConfig(rounds=3, max_depth=2))
    assert boost.base_value == pytest.approx(y.mean(), rel=1e-15)


def test_boost_constant_response_keeps_zero_rounds():
    x = sample_driver(32, 1, 1, seed=23)
    y = np.full(32, 2.5)
    boost = fit_boost(x, y, BoostConfig(rounds=10))
    assert boost.n_rounds == 0
    assert boost.n_cells == 1
    np.testing.assert_array_equal(predict(boost, x), y)


def test_boost_training_error_is_monotone(toy):
    x, y = toy
    boost = fit_boost(x, y, BoostConfig(rounds=30, learning_rate=0.5, max_depth=3))
    errs = np.asarray(boost.train_errors)
    assert errs.size > 0
    assert (np.diff(errs) <= 1e-12).all()


def test_boost_early_stopping_rolls_back_to_best_round():
    # deep trees on pure noise overfit quickly, so validation error turns
    rng = np.random.default_rng(24)
    x = rng.standard_normal((150, 1, 2))
    y = rng.standard_normal(150)
    vx = rng.standard_normal((150, 1, 2))
    vy = rng.standard_normal(150)
    boost = fit_boost(x, y, BoostConfig(rounds=60, learning_rate=0.5,
                                        nodesize=2, max_depth=None, patience=5),
                      valid_sample=vx, valid_responses=vy)
    assert boost.n_rounds < 60
    errs = np.asarray(boost.valid_errors)
    assert errs.size == boost.n_rounds
    if boost.n_rounds:
        assert errs[-1] == errs.min()


def test_boost_without_patience_keeps_all_rounds(toy):
    x, y = toy
    vx = sample_driver(50, 2, 2, seed=25)
    vy = np.sin(vx.flat() @ np.array([1.0, 0.5, -0.7, 0.2]))
    boost = fit_boost(x, y, BoostConfig(rounds=8, max_depth=2),
                      valid_sample=vx, valid_responses=vy)
    assert boost.n_rounds == 8
    assert len(boost.valid_errors) == 8


def test_boost_validation_requires_responses(toy):
    x, y = toy
    with pytest.raises(ValueError):
        fit_boost(x, y, BoostConfig(rounds=2), valid_sample=x)


def test_boost_config_validation():
    with pytest.raises(ValueError):
        BoostConfig(rounds=0)
    with pytest.raises(ValueError):
        BoostConfig(learning_rate=0.0)
    with pytest.raises(ValueError):
        BoostConfig(learning_rate=1.5)
    with pytest.raises(ValueError):
        BoostConfig(patience=0)


def test_boost_refit_is_deterministic(toy):
    x, y = toy
    cfg = BoostConfig(rounds=10, max_depth=3, seed=4)
    p1 = predict(fit_boost(x, y, cfg), x)
    p2 = predict(fit_boost(x, y, cfg), x)
    np.testing.assert_array_equal(p1, p2)


def test_predict_rejects_unknown_models():
    with pytest.raises(TypeError):
        predict(object(), np.zeros((1, 1, 1)))


def test_predict_single_point_shapes(toy):
    x, y = toy
    ff = fit_forest(x, y, ForestConfig(n_trees=2, nodesize=20, seed=8))
    boost = fit_boost(x, y, BoostConfig(rounds=2, max_depth=2))
    single = x.data[0]
    assert isinstance(predict(ff, single), float)
    assert isinstance(predict(boost, single), float)
    batch = predict(boost, x.data[:3])
    assert batch.shape == (3,)
