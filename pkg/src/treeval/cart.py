"""Regression trees on driver paths with hyperrectangular leaf cells.

A tree is grown greedily: each split minimizes the summed squared error
of the two children over all coordinates ``(j, s)`` (asset j, period s)
and midpoint thresholds of consecutive distinct observed values.  Leaves
carry the mean response of their training points, so the fitted function
is piecewise constant on a partition of R^{d x T} into half-open
hyperrectangles ``prod (a_{j,s}, b_{j,s}]``.

Coordinates are flattened time-major: flat column ``c = s*d + j``.  The
first ``t*d`` columns therefore describe the first t periods, which is
what conditional valuation slices on.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.random import Generator, Philox, SeedSequence

from .paths import DriverSample

_LEAF = -1


@dataclass(frozen=True)
class Hyperrectangle:
    """Half-open cell prod_{j,s} (lower_{j,s}, upper_{j,s}] in R^{d x T}.

    Membership is ``lower < x <= upper`` componentwise; an upper bound of
    +inf leaves the cell open above.
    """

    lower: np.ndarray  # (d, T)
    upper: np.ndarray  # (d, T)

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=np.float64))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=np.float64))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 2:
            raise ValueError("lower and upper must share a (d, T) shape")
        if not (self.lower < self.upper).all():
            raise ValueError("hyperrectangle requires lower < upper componentwise")

    @property
    def dims(self) -> tuple:
        return self.lower.shape

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership of points x with shape (d, T) or (k, d, T)."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 2
        pts = x[None] if single else x
        inside = ((pts > self.lower) & (pts <= self.upper)).all(axis=(1, 2))
        return bool(inside[0]) if single else inside


def full_cell(d: int, T: int) -> Hyperrectangle:
    """The whole space R^{d x T} as a cell."""
    return Hyperrectangle(np.full((d, T), -np.inf), np.full((d, T), np.inf))


def flat_coord(j: int, s: int, d: int) -> int:
    """Flat column of coordinate (asset j, period s) in time-major layout."""
    return s * d + j


def coord_pair(c: int, d: int) -> tuple:
    """Inverse of flat_coord: flat column -> (asset j, period s)."""
    return c % d, c // d


@dataclass(frozen=True)
class TreeConfig:
    """Growth controls for a single regression tree.

    nodesize
        Minimum number of training points a cell must contain to be
        eligible for splitting (so every leaf from a split holds >= 1
        point and split cells hold >= nodesize).
    max_depth / max_leaves
        Optional caps; ``max_leaves`` switches growth to best-first by
        error reduction, otherwise growth is depth-first.
    features
        Number of coordinates drawn uniformly without replacement as
        split candidates at each cell, or "all".
    seed
        Seeds the candidate-coordinate draws.
    """

    nodesize: int = 2
    max_depth: Optional[int] = None
    max_leaves: Optional[int] = None
    features: int | str = "all"
    seed: int = 0

    def __post_init__(self):
        if self.nodesize < 2:
            raise ValueError("nodesize must be >= 2")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_leaves is not None and self.max_leaves < 1:
            raise ValueError("max_leaves must be >= 1")
        if self.features != "all" and (not isinstance(self.features, int) or self.features < 1):
            raise ValueError('features must be "all" or a positive int')


@dataclass(frozen=True)
class RegressionTree:
    """Fitted tree in flat array form.

    ``feature[i] == -1`` marks node i as a leaf with prediction
    ``value[i]``; otherwise the node routes x to ``left[i]`` when
    ``x[feature[i]] <= threshold[i]`` and to ``right[i]`` otherwise.
    ``count[i]`` is the number of training points that reached node i.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    dims: tuple  # (d, T)

    @property
    def n_leaves(self) -> int:
        return int((self.feature == _LEAF).sum())

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def leaf_cells(self):
        """Leaf partition as flat bound arrays.

        Returns (lower, upper, value, count) where the bound arrays have
        shape (n_leaves, d*T) in time-major column order.  The cells
        partition R^{d x T}.
        """
        d, T = self.dims
        P = d * T
        n = self.n_nodes
        lows = np.empty((n, P))
        highs = np.empty((n, P))
        lows[0] = -np.inf
        highs[0] = np.inf
        # children are created after parents, so a forward pass suffices
        for i in range(n):
            f = self.feature[i]
            if f == _LEAF:
                continue
            le, ri = self.left[i], self.right[i]
            lows[le] = lows[i]
            highs[le] = highs[i]
            lows[ri] = lows[i]
            highs[ri] = highs[i]
            highs[le, f] = self.threshold[i]
            lows[ri, f] = self.threshold[i]
        mask = self.feature == _LEAF
        return lows[mask], highs[mask], self.value[mask], self.count[mask]


def _as_flat(x, dims=None):
    """Coerce points to (k, d*T) time-major; accepts (d,T), (k,d,T), (k,P)."""
    if isinstance(x, DriverSample):
        return x.flat()
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        k, d, T = x.shape
        return np.ascontiguousarray(x.transpose(0, 2, 1).reshape(k, T * d))
    if x.ndim == 2 and dims is not None and x.shape == dims:
        d, T = dims
        return np.ascontiguousarray(x.T.reshape(1, T * d))
    if x.ndim == 2:
        return x
    if x.ndim == 1:
        return x[None, :]
    raise ValueError("cannot interpret point array of this shape")


def _scan_column(xs: np.ndarray, y: np.ndarray):
    """Best midpoint split of one coordinate.

    Returns (score, threshold) minimizing the summed squared error of
    the two children, or None when no valid threshold exists.  Ties go
    to the smallest threshold.
    """
    order = np.argsort(xs, kind="stable")
    xo = xs[order]
    yo = y[order]
    cy = np.cumsum(yo)
    cy2 = np.cumsum(yo * yo)
    k = y.size
    idx = np.flatnonzero(xo[:-1] != xo[1:])
    if idx.size == 0:
        return None
    z = 0.5 * (xo[idx] + xo[idx + 1])
    # midpoints that round onto an endpoint would produce an empty child
    ok = (xo[idx] < z) & (z < xo[idx + 1])
    idx, z = idx[ok], z[ok]
    if idx.size == 0:
        return None
    nl = idx + 1.0
    nr = k - nl
    sl, sl2 = cy[idx], cy2[idx]
    sr, sr2 = cy[-1] - sl, cy2[-1] - sl2
    score = (sl2 - sl * sl / nl) + (sr2 - sr * sr / nr)
    m = int(np.argmin(score))  # first minimum = smallest threshold
    return float(score[m]), float(z[m])


def best_split(features: np.ndarray, responses: np.ndarray,
               candidates: Optional[Sequence[int]] = None):
    """Greedy split of a cell's points over candidate flat coordinates.

    features is (k, P) in time-major layout; candidates holds flat
    column indices (default: all).  Returns ``(coord, threshold, score)``
    for the split minimizing child SSE, or None when the responses are
    constant or no split strictly improves on the parent SSE.  Ties are
    broken toward the smallest (coord, threshold).
    """
    features = np.asarray(features, dtype=np.float64)
    y = np.asarray(responses, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != y.size:
        raise ValueError("features must be (k, P) aligned with responses")
    if y.size < 2 or y.min() == y.max():
        return None
    cols = np.arange(features.shape[1]) if candidates is None else np.sort(np.asarray(candidates))
    sy = float(np.sum(y))
    sy2 = float(np.sum(y * y))
    parent = sy2 - sy * sy / y.size
    best = None
    for c in cols:
        hit = _scan_column(features[:, c], y)
        if hit is None:
            continue
        score, z = hit
        if best is None or score < best[2]:
            best = (int(c), z, score)
    if best is None or not best[2] < parent:
        return None
    return best


class _NodeBuffer:
    """Append-only node storage during growth."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []
        self.count = []

    def add_leaf(self, value: float, count: int) -> int:
        i = len(self.feature)
        self.feature.append(_LEAF)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.count.append(count)
        return i

    def make_split(self, node: int, coord: int, z: float, left: int, right: int):
        self.feature[node] = coord
        self.threshold[node] = z
        self.left[node] = left
        self.right[node] = right

    def freeze(self, dims) -> RegressionTree:
        return RegressionTree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=np.float64),
            count=np.asarray(self.count, dtype=np.int64),
            dims=dims,
        )


def _leaf_value(y: np.ndarray) -> float:
    return float(np.mean(y)) if y.size else 0.0


def _candidate_cols(rng: Generator, P: int, features) -> Optional[np.ndarray]:
    if features == "all" or features >= P:
        return None
    return np.sort(rng.choice(P, size=features, replace=False))


def _grow(buf: _NodeBuffer, Xf, y, cfg: TreeConfig, rng: Generator):
    """Depth-first growth (left child first); used when max_leaves is unset."""
    P = Xf.shape[1]
    root = buf.add_leaf(_leaf_value(y), y.size)
    stack = [(root, np.arange(y.size), 0)]
    while stack:
        node, rows, depth = stack.pop()
        if rows.size < cfg.nodesize:
            continue
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            continue
        cols = _candidate_cols(rng, P, cfg.features)
        hit = best_split(Xf[rows], y[rows], cols)
        if hit is None:
            continue
        coord, z, _ = hit
        go_left = Xf[rows, coord] <= z
        lrows, rrows = rows[go_left], rows[~go_left]
        li = buf.add_leaf(_leaf_value(y[lrows]), lrows.size)
        ri = buf.add_leaf(_leaf_value(y[rrows]), rrows.size)
        buf.make_split(node, coord, z, li, ri)
        stack.append((ri, rrows, depth + 1))
        stack.append((li, lrows, depth + 1))


def _grow_best_first(buf: _NodeBuffer, Xf, y, cfg: TreeConfig, rng: Generator):
    """Best-first growth by SSE reduction until max_leaves is reached."""
    P = Xf.shape[1]

    def propose(node, rows, depth):
        if rows.size < cfg.nodesize:
            return None
        if cfg.max_depth is not None and depth >= cfg.max_depth:
            return None
        cols = _candidate_cols(rng, P, cfg.features)
        hit = best_split(Xf[rows], y[rows], cols)
        if hit is None:
            return None
        ys = y[rows]
        sy, sy2 = float(np.sum(ys)), float(np.sum(ys * ys))
        parent = sy2 - sy * sy / rows.size
        coord, z, score = hit
        return parent - score, coord, z

    root = buf.add_leaf(_leaf_value(y), y.size)
    heap = []
    tick = 0  # insertion order breaks reduction ties deterministically
    cand = propose(root, np.arange(y.size), 0)
    if cand is not None:
        heapq.heappush(heap, (-cand[0], tick, root, np.arange(y.size), 0, cand[1], cand[2]))
        tick += 1
    leaves = 1
    while heap and leaves < cfg.max_leaves:
        _, _, node, rows, depth, coord, z = heapq.heappop(heap)
        go_left = Xf[rows, coord] <= z
        lrows, rrows = rows[go_left], rows[~go_left]
        li = buf.add_leaf(_leaf_value(y[lrows]), lrows.size)
        ri = buf.add_leaf(_leaf_value(y[rrows]), rrows.size)
        buf.make_split(node, coord, z, li, ri)
        leaves += 1
        for child, crows in ((li, lrows), (ri, rrows)):
            cand = propose(child, crows, depth + 1)
            if cand is not None:
                heapq.heappush(heap, (-cand[0], tick, child, crows, depth + 1, cand[1], cand[2]))
                tick += 1


def fit_tree(sample, responses, cfg: TreeConfig = TreeConfig(),
             rng: Optional[Generator] = None) -> RegressionTree:
    """Grow a regression tree on driver paths against responses.

    sample may be a DriverSample or an (n, d, T) array; responses must
    be finite with one entry per path.
    """
    if isinstance(sample, DriverSample):
        dims = sample.dims[1:]
        Xf = sample.flat()
    else:
        arr = np.asarray(sample, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError("sample must be a DriverSample or an (n, d, T) array")
        dims = arr.shape[1:]
        Xf = _as_flat(arr)
    y = np.asarray(responses, dtype=np.float64)
    if y.shape != (Xf.shape[0],):
        raise ValueError("responses must be a vector with one entry per path")
    if not np.isfinite(y).all():
        raise ValueError("responses contain non-finite entries")
    if rng is None:
        rng = Generator(Philox(SeedSequence(cfg.seed)))
    buf = _NodeBuffer()
    if cfg.max_leaves is None:
        _grow(buf, Xf, y, cfg, rng)
    else:
        _grow_best_first(buf, Xf, y, cfg, rng)
    return buf.freeze(dims)


def predict_tree(tree: RegressionTree, x) -> np.ndarray | float:
    """Evaluate the fitted function at x ((d,T), (k,d,T) or flat (k,P)).

    A 2-D input whose shape equals the tree's (d, T) dims is read as a
    single point and returns a float; other inputs return one value per
    row.
    """
    Xf = _as_flat(x, dims=tree.dims)
    if isinstance(x, DriverSample):
        single = False
    else:
        xa = np.asarray(x)
        single = xa.ndim == 1 or (xa.ndim == 2 and xa.shape == tree.dims)
    node = np.zeros(Xf.shape[0], dtype=np.int32)
    active = tree.feature[node] != _LEAF
    while active.any():
        rows = np.flatnonzero(active)
        cur = node[rows]
        f = tree.feature[cur]
        go_left = Xf[rows, f] <= tree.threshold[cur]
        node[rows] = np.where(go_left, tree.left[cur], tree.right[cur])
        active[rows] = tree.feature[node[rows]] != _LEAF
    out = tree.value[node]
    return float(out[0]) if single else out
