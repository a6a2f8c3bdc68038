"""Random forests and gradient boosting built on the CART grower.

A forest averages trees fitted on resampled data with per-split
coordinate subsampling.  Boosting starts from the response mean and
repeatedly fits a tree to the current residuals ``f_{t-1}(x_i) - y_i``,
subtracting a line-search multiple of it:

    f_t = f_{t-1} - learning_rate * gamma_t * g_t,
    gamma_t = max(0, sum r_i g_t(x_i) / sum g_t(x_i)^2).

With learning_rate = 1 the update is the exact one-dimensional least
squares step; smaller rates shrink each step.  Optional early stopping
tracks validation error and rolls back to the best iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .cart import RegressionTree, TreeConfig, fit_tree, predict_tree, _as_flat
from .paths import DriverSample

_SAMPLINGS = ("bootstrap", "subsample_with", "subsample_without")


@dataclass(frozen=True)
class ForestConfig:
    """Random-forest controls.

    n_trees
        Number of trees M.
    sampling / n_resample
        "bootstrap" draws n points with replacement (n_resample must be
        None or n); the subsample modes draw n_resample points with or
        without replacement.
    features
        Coordinates drawn uniformly without replacement per split, or
        "all".
    """

    n_trees: int = 100
    nodesize: int = 5
    features: int | str = "all"
    sampling: str = "bootstrap"
    n_resample: Optional[int] = None
    max_depth: Optional[int] = None
    max_leaves: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.sampling not in _SAMPLINGS:
            raise ValueError(f"sampling must be one of {_SAMPLINGS}")
        if self.sampling != "bootstrap" and self.n_resample is None:
            raise ValueError("subsample modes require n_resample")
        TreeConfig(nodesize=self.nodesize, max_depth=self.max_depth,
                   max_leaves=self.max_leaves, features=self.features)


@dataclass(frozen=True)
class FittedForest:
    trees: tuple
    dims: tuple
    config: ForestConfig

    @property
    def n_cells(self) -> int:
        return sum(t.n_leaves for t in self.trees)


def _resample_rows(rng: Generator, n: int, cfg: ForestConfig) -> np.ndarray:
    if cfg.sampling == "bootstrap":
        if cfg.n_resample not in (None, n):
            raise ValueError("bootstrap resamples exactly n points")
        return rng.integers(0, n, size=n)
    if cfg.n_resample < 1:
        raise ValueError("n_resample must be >= 1")
    if cfg.sampling == "subsample_with":
        return rng.integers(0, n, size=cfg.n_resample)
    if cfg.n_resample > n:
        raise ValueError("cannot subsample more than n points without replacement")
    return rng.permutation(n)[: cfg.n_resample]


def fit_forest(sample, responses, cfg: ForestConfig = ForestConfig()) -> FittedForest:
    """Fit a random forest on driver paths against responses.

    Tree m is grown on rows resampled from stream (seed, m), so each
    tree's data and split draws depend only on (seed, m) and are stable
    under re-runs.
    """
    if isinstance(sample, DriverSample):
        data = sample.data
    else:
        data = np.asarray(sample, dtype=np.float64)
    n = data.shape[0]
    y = np.asarray(responses, dtype=np.float64)
    tree_cfg = TreeConfig(nodesize=cfg.nodesize, max_depth=cfg.max_depth,
                          max_leaves=cfg.max_leaves, features=cfg.features)
    seqs = SeedSequence(cfg.seed).spawn(cfg.n_trees)
    trees = []
    for m in range(cfg.n_trees):
        rng = Generator(Philox(seqs[m]))
        rows = _resample_rows(rng, n, cfg)
        trees.append(fit_tree(data[rows], y[rows], tree_cfg, rng=rng))
    return FittedForest(trees=tuple(trees), dims=data.shape[1:], config=cfg)


@dataclass(frozen=True)
class BoostConfig:
    """Gradient-boosting controls.

    rounds
        Maximum number of boosting rounds.
    patience
        With a validation set, stop after this many rounds without a new
        best validation error and roll back to the best round; None
        disables early stopping.
    """

    rounds: int = 100
    learning_rate: float = 0.1
    nodesize: int = 2
    max_depth: Optional[int] = 6
    max_leaves: Optional[int] = None
    patience: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be >= 1")
        TreeConfig(nodesize=self.nodesize, max_depth=self.max_depth,
                   max_leaves=self.max_leaves)


@dataclass(frozen=True)
class FittedBoost:
    base_value: float
    trees: tuple
    gammas: tuple
    learning_rate: float
    dims: tuple
    config: BoostConfig
    train_errors: tuple = ()
    valid_errors: tuple = ()

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    @property
    def n_cells(self) -> int:
        return 1 + sum(t.n_leaves for t in self.trees)


def fit_boost(sample, responses, cfg: BoostConfig = BoostConfig(),
              valid_sample=None, valid_responses=None) -> FittedBoost:
    """Fit a boosted tree model, optionally with validation early stopping.

    Residual trees are grown with all coordinates as candidates; the
    line-search multiplier gamma_t is clipped at zero, and a round with
    an identically-zero tree ends the loop (the update would be a
    no-op).
    """
    if isinstance(sample, DriverSample):
        data = sample.data
    else:
        data = np.asarray(sample, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    dims = data.shape[1:]
    Xf = _as_flat(data)
    tree_cfg = TreeConfig(nodesize=cfg.nodesize, max_depth=cfg.max_depth,
                          max_leaves=cfg.max_leaves)
    use_valid = valid_sample is not None
    if use_valid:
        if valid_responses is None:
            raise ValueError("valid_sample requires valid_responses")
        vXf = _as_flat(valid_sample.data if isinstance(valid_sample, DriverSample) else
                       np.asarray(valid_sample, dtype=np.float64))
        vy = np.asarray(valid_responses, dtype=np.float64)

    base = float(np.mean(y))
    cur = np.full(y.size, base)
    trees, gammas, train_err, valid_err = [], [], [], []
    best_round, best_err = 0, np.inf
    if use_valid:
        vcur = np.full(vy.size, base)
        best_err = float(np.mean((vcur - vy) ** 2))
    seqs = SeedSequence(cfg.seed).spawn(cfg.rounds)
    for t in range(cfg.rounds):
        resid = cur - y
        tree = fit_tree(data, resid, tree_cfg, rng=Generator(Philox(seqs[t])))
        g = predict_tree(tree, Xf)
        den = float(np.sum(g * g))
        if den == 0.0:
            break
        gamma = max(float(np.sum(resid * g)) / den, 0.0)
        if gamma == 0.0:
            break
        cur = cur - cfg.learning_rate * gamma * g
        trees.append(tree)
        gammas.append(gamma)
        train_err.append(float(np.mean((cur - y) ** 2)))
        if use_valid:
            vcur = vcur - cfg.learning_rate * gamma * predict_tree(tree, vXf)
            err = float(np.mean((vcur - vy) ** 2))
            valid_err.append(err)
            if err < best_err:
                best_err, best_round = err, t + 1
            elif cfg.patience is not None and (t + 1) - best_round >= cfg.patience:
                break
    if use_valid and cfg.patience is not None:
        keep = best_round
    else:
        keep = len(trees)
    return FittedBoost(base_value=base, trees=tuple(trees[:keep]), gammas=tuple(gammas[:keep]),
                       learning_rate=cfg.learning_rate, dims=dims, config=cfg,
                       train_errors=tuple(train_err[:keep]), valid_errors=tuple(valid_err[:keep]))


def predict(model, x) -> np.ndarray | float:
    """Evaluate a fitted tree, forest, or boosted model at x."""
    if isinstance(model, RegressionTree):
        return predict_tree(model, x)
    if isinstance(model, FittedForest):
        preds = [predict_tree(t, x) for t in model.trees]
        if np.isscalar(preds[0]):
            return float(np.mean(preds))
        return np.mean(preds, axis=0)
    if isinstance(model, FittedBoost):
        acc = None
        for tree, gamma in zip(model.trees, model.gammas):
            p = predict_tree(tree, x)
            step = model.learning_rate * gamma * (p if not np.isscalar(p) else float(p))
            acc = step if acc is None else acc + step
        if acc is None:
            xa = np.asarray(x) if not isinstance(x, DriverSample) else x.data
            k = 1 if (not isinstance(x, DriverSample) and xa.ndim < 3
                      and (xa.ndim == 1 or xa.shape == model.dims)) else xa.shape[0]
            acc = 0.0 if k == 1 else np.zeros(k)
        out = model.base_value - acc
        return float(out) if np.isscalar(out) else out
    raise TypeError(f"cannot predict with object of type {type(model).__name__}")
