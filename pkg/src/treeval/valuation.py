"""Closed-form dynamic valuation of flattened tree models.

For a model f(x) = sum_i v_i 1{x in A_i} with product cells
A_i = prod_s A_{i,s} and an i.i.d. driver, the conditional expectation
given the first t periods is available in closed form:

    V_t(x_1..x_t) = sum_i v_i * 1{x_s in A_{i,s}, s <= t}
                           * prod_{s > t} Q_s[A_{i,s}].

Evaluating it therefore costs one membership test on the observed
prefix plus precomputed per-period cell probabilities; no nested
simulation is involved.  t = 0 uses the empty prefix (membership 1) and
t = T has an empty probability tail (product 1), which reduces to plain
model evaluation on the full path.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .cart import RegressionTree, TreeConfig, fit_tree
from .ensemble import BoostConfig, ForestConfig, fit_boost, fit_forest, predict
from .flat import FlatEnsemble, weighted_membership
from .paths import DriverSample


def period_prob_matrix(fe: FlatEnsemble, measure) -> np.ndarray:
    """Per-cell per-period slice probabilities, shape (N, T)."""
    d, T = fe.dims
    if measure.dims != (d, T):
        raise ValueError("measure dims do not match the ensemble dims")
    probs = np.empty((fe.n_cells, T))
    for s in range(T):
        probs[:, s] = measure.period_probs(s, fe.lows[:, :, s], fe.highs[:, :, s])
    return probs


def tail_products(probs: np.ndarray) -> np.ndarray:
    """tails[:, t] = prod over columns t.. of probs; tails[:, T] = 1."""
    n, T = probs.shape
    tails = np.ones((n, T + 1))
    for t in range(T - 1, -1, -1):
        tails[:, t] = tails[:, t + 1] * probs[:, t]
    return tails


def _prefix_flat(prefix, d: int, t: int) -> np.ndarray:
    """Coerce a (d, t) observed prefix to (1, t*d) time-major."""
    pre = np.asarray(prefix, dtype=np.float64)
    if pre.shape == (d, t):
        return pre.T.reshape(1, t * d)
    if pre.shape == (t * d,):
        return pre[None, :]
    raise ValueError(f"prefix must have shape ({d}, {t})")


def value_at(fe: FlatEnsemble, measure, t: int, prefix=None) -> float:
    """Conditional value at date t given the observed driver prefix.

    prefix holds the first t periods as a (d, t) array (ignored for
    t = 0).
    """
    d, T = fe.dims
    if not 0 <= t <= T:
        raise ValueError(f"date {t} outside 0..{T}")
    tails = tail_products(period_prob_matrix(fe, measure))
    w = fe.values * tails[:, t]
    if t == 0:
        return float(w.sum())
    if prefix is None:
        raise ValueError("dates t >= 1 require the observed prefix")
    ptf = _prefix_flat(prefix, d, t)
    lo, hi = fe.flat_bounds()
    return float(weighted_membership(ptf, lo, hi, w, t * d)[0])


@dataclass(frozen=True)
class ValueSurface:
    """Conditional values of a model along scenarios at selected dates."""

    dates: tuple
    values: np.ndarray  # (n_scenarios, len(dates))
    meta: dict = field(default_factory=dict)

    def column(self, t: int) -> np.ndarray:
        return self.values[:, self.dates.index(t)]

    def to_csv(self, path) -> None:
        """Long-format rows ``scenario_id,t,value``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["scenario_id", "t", "value"])
            for i in range(self.values.shape[0]):
                for k, t in enumerate(self.dates):
                    w.writerow([i, t, repr(float(self.values[i, k]))])

    def write_meta(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)
            fh.write("\n")


def value_surface(fe: FlatEnsemble, measure, dates: Sequence[int], scenarios,
                  meta: Optional[dict] = None) -> ValueSurface:
    """Conditional values at each date along each scenario path.

    scenarios is a DriverSample or (k, d, T) array of full driver paths;
    date t uses only the first t periods of each path.  Cell
    probabilities are computed once and shared across dates and
    scenarios.
    """
    d, T = fe.dims
    dates = tuple(int(t) for t in dates)
    if any(not 0 <= t <= T for t in dates):
        raise ValueError(f"dates must lie in 0..{T}")
    data = scenarios.data if isinstance(scenarios, DriverSample) else \
        np.asarray(scenarios, dtype=np.float64)
    if data.ndim != 3 or data.shape[1:] != (d, T):
        raise ValueError("scenarios must have shape (k, d, T)")
    k = data.shape[0]
    ptf = np.ascontiguousarray(data.transpose(0, 2, 1).reshape(k, T * d))
    tails = tail_products(period_prob_matrix(fe, measure))
    lo, hi = fe.flat_bounds()
    out = np.empty((k, len(dates)))
    for col, t in enumerate(dates):
        w = fe.values * tails[:, t]
        if t == 0:
            out[:, col] = w.sum()
        else:
            out[:, col] = weighted_membership(ptf, lo, hi, w, t * d)
    return ValueSurface(dates=dates, values=out, meta=dict(meta or {}))


@dataclass(frozen=True)
class RegressNowModel:
    """Date-1 value model regressed directly on the first-period driver."""

    model: object

    def predict(self, x1: np.ndarray) -> np.ndarray:
        """Evaluate at first-period cross-sections x1 of shape (k, d)."""
        x1 = np.asarray(x1, dtype=np.float64)
        if x1.ndim != 2:
            raise ValueError("x1 must have shape (k, d)")
        return np.asarray(predict(self.model, x1[:, :, None]), dtype=np.float64)


def fit_regress_now(x1: np.ndarray, responses, config) -> RegressNowModel:
    """Regress date-T cash flows on the first-period driver only.

    This is the classical regress-now estimator of the date-1 value: it
    predicts well along observed states but knows nothing about later
    periods.  config may be a TreeConfig, ForestConfig, or BoostConfig.
    """
    x1 = np.asarray(x1, dtype=np.float64)
    if x1.ndim != 2:
        raise ValueError("x1 must have shape (n, d)")
    data = x1[:, :, None]
    if isinstance(config, ForestConfig):
        fitted = fit_forest(data, responses, config)
    elif isinstance(config, BoostConfig):
        fitted = fit_boost(data, responses, config)
    elif isinstance(config, TreeConfig):
        fitted = fit_tree(data, responses, config)
    else:
        raise TypeError("config must be a TreeConfig, ForestConfig, or BoostConfig")
    return RegressNowModel(model=fitted)
