"""Closed-form value process of flattened models."""

import csv
import json

import numpy as np
import pytest
from scipy.special import ndtr

from treeval.cart import TreeConfig, fit_tree
from treeval.ensemble import BoostConfig, fit_boost
from treeval.flat import FlatEnsemble, evaluate_flat, flatten_model
from treeval.measure import ProductMeasure
from treeval.paths import sample_driver
from treeval.valuation import (RegressNowModel, ValueSurface, fit_regress_now,
                               period_prob_matrix, tail_products, value_at,
                               value_surface)


def half_space_model():
    """One cell: 1{x_{1,1} > 0} on a (1, 2) driver, value 1."""
    lows = np.array([[[0.0, -np.inf]]])
    highs = np.array([[[np.inf, np.inf]]])
    return FlatEnsemble(lows=lows, highs=highs, values=np.array([1.0]), dims=(1, 2))


def test_half_space_value_process_hand_values():
    fe = half_space_model()
    q = ProductMeasure.standard_normal(1, 2)
    # V_0 = P(X_1 > 0) = 1/2 exactly
    assert value_at(fe, q, 0) == 0.5
    # V_1(x_1) = 1{x_1 > 0}
    assert value_at(fe, q, 1, prefix=np.array([[0.7]])) == 1.0
    assert value_at(fe, q, 1, prefix=np.array([[-0.7]])) == 0.0
    # V_2 is the model itself
    assert value_at(fe, q, 2, prefix=np.array([[0.7, 9.9]])) == 1.0


def test_box_cell_tail_probabilities():
    # cell (0,1] x (-1,2]: V_0 = (Phi(1)-Phi(0)) * (Phi(2)-Phi(-1)) * v
    lows = np.array([[[0.0, -1.0]]])
    highs = np.array([[[1.0, 2.0]]])
    fe = FlatEnsemble(lows=lows, highs=highs, values=np.array([3.0]), dims=(1, 2))
    q = ProductMeasure.standard_normal(1, 2)
    p1 = ndtr(1.0) - ndtr(0.0)
    p2 = ndtr(2.0) - ndtr(-1.0)
    assert value_at(fe, q, 0) == pytest.approx(3.0 * p1 * p2, rel=1e-14)
    # conditioning on a first period inside the slab leaves the tail
    assert value_at(fe, q, 1, prefix=np.array([[0.5]])) == pytest.approx(3.0 * p2, rel=1e-14)
    assert value_at(fe, q, 1, prefix=np.array([[1.5]])) == 0.0


def test_period_prob_matrix_and_tails():
    fe = half_space_model()
    q = ProductMeasure.standard_normal(1, 2)
    probs = period_prob_matrix(fe, q)
    np.testing.assert_allclose(probs, [[0.5, 1.0]], rtol=0, atol=0)
    tails = tail_products(probs)
    np.testing.assert_allclose(tails, [[0.5, 1.0, 1.0]], rtol=0, atol=0)


def test_value_at_validation():
    fe = half_space_model()
    q = ProductMeasure.standard_normal(1, 2)
    with pytest.raises(ValueError):
        value_at(fe, q, 3)
    with pytest.raises(ValueError):
        value_at(fe, q, 1)  # missing prefix
    with pytest.raises(ValueError):
        value_at(fe, ProductMeasure.standard_normal(2, 2), 0)


@pytest.fixture(scope="module")
def fitted_flat():
    x = sample_driver(400, 2, 2, seed=51)
    y = np.maximum(1.0 - np.exp(0.2 * x.data[:, :, -1]).min(axis=1), 0.0)
    boost = fit_boost(x, y, BoostConfig(rounds=15, learning_rate=0.3, max_depth=3))
    fe = flatten_model(boost)
    q = ProductMeasure.standard_normal(2, 2)
    return fe, q


def test_terminal_date_reduces_to_model_evaluation(fitted_flat):
    fe, q = fitted_flat
    pts = sample_driver(200, 2, 2, seed=52)
    surf = value_surface(fe, q, (0, 1, 2), pts)
    np.testing.assert_array_equal(surf.column(2), evaluate_flat(fe, pts))


def test_value_surface_matches_value_at(fitted_flat):
    fe, q = fitted_flat
    pts = sample_driver(5, 2, 2, seed=53)
    surf = value_surface(fe, q, (0, 1, 2), pts)
    for i in range(5):
        v1 = value_at(fe, q, 1, prefix=pts.data[i, :, :1])
        # batch and single-point paths may differ by summation order only
        assert surf.column(1)[i] == pytest.approx(v1, rel=1e-12, abs=1e-15)
    v0 = value_at(fe, q, 0)
    np.testing.assert_array_equal(surf.column(0), np.full(5, v0))


def test_tower_property_of_closed_form(fitted_flat):
    # E[V_1(X_1)] = V_0 under the sampling measure
    fe, q = fitted_flat
    pts = sample_driver(20_000, 2, 2, seed=54)
    surf = value_surface(fe, q, (0, 1), pts)
    v1 = surf.column(1)
    se = v1.std(ddof=1) / np.sqrt(v1.size)
    assert abs(v1.mean() - surf.column(0)[0]) < 3 * se


def test_value_surface_linearity(fitted_flat):
    fe, q = fitted_flat
    scaled = FlatEnsemble(lows=fe.lows, highs=fe.highs,
                          values=2.5 * fe.values, dims=fe.dims)
    pts = sample_driver(50, 2, 2, seed=55)
    a = value_surface(fe, q, (0, 1, 2), pts)
    b = value_surface(scaled, q, (0, 1, 2), pts)
    np.testing.assert_allclose(b.values, 2.5 * a.values, rtol=1e-13, atol=1e-15)


def test_value_surface_validation(fitted_flat):
    fe, q = fitted_flat
    pts = sample_driver(4, 2, 2, seed=56)
    with pytest.raises(ValueError):
        value_surface(fe, q, (0, 3), pts)
    with pytest.raises(ValueError):
        value_surface(fe, q, (0,), pts.data[:, :1, :])


def test_value_surface_csv_round_trip(tmp_path, fitted_flat):
    fe, q = fitted_flat
    pts = sample_driver(7, 2, 2, seed=57)
    surf = value_surface(fe, q, (0, 2), pts, meta={"estimator": "boost", "seed": 57})
    path = tmp_path / "surface.csv"
    surf.to_csv(path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["scenario_id", "t", "value"]
    assert len(rows) == 1 + 7 * 2
    # repr round-trips doubles exactly
    for row in rows[1:]:
        i, t, val = int(row[0]), int(row[1]), float(row[2])
        assert val == surf.values[i, surf.dates.index(t)]
    meta_path = tmp_path / "surface.meta.json"
    surf.write_meta(meta_path)
    assert json.loads(meta_path.read_text()) == {"estimator": "boost", "seed": 57}


def test_regress_now_recovers_first_period_function():
    # when y depends only on x1, the regress-now tree interpolates it
    rng = np.random.default_rng(58)
    x1 = rng.standard_normal((100, 2))
    y = np.sign(x1[:, 0]) + 0.5 * np.sign(x1[:, 1])
    model = fit_regress_now(x1, y, TreeConfig(nodesize=2))
    np.testing.assert_allclose(model.predict(x1), y, rtol=0, atol=1e-12)


def test_regress_now_validation():
    with pytest.raises(TypeError):
        fit_regress_now(np.zeros((4, 1)), np.zeros(4), config="boost")
    with pytest.raises(ValueError):
        fit_regress_now(np.zeros(4), np.zeros(4), TreeConfig())
    model = fit_regress_now(np.zeros((4, 1)) + np.arange(4)[:, None],
                            np.arange(4.0), TreeConfig())
    with pytest.raises(ValueError):
        model.predict(np.zeros(3))
