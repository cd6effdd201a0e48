"""CART-style regression tree grown by exhaustive best-split search.

At each node every feature and every midpoint between consecutive distinct
sorted values is evaluated; the split minimizing total child SSE wins, with
ties resolved toward the lower feature index and then the lower threshold.
Leaves predict the mean target of their training points, so the fitted model
answers at any real-valued input, not just the training grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 4
    max_depth: Optional[int] = None
    min_gain: float = 0.0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValidationError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth must be >= 0")
        if self.min_gain < 0:
            raise ValidationError("min_gain must be >= 0")


@dataclass(frozen=True)
class Leaf:
    prediction: float
    n_train: int


@dataclass(frozen=True)
class Internal:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Internal]


@dataclass(frozen=True)
class TrainStats:
    rmse: float
    mae: float
    n: int


@dataclass(frozen=True)
class TreeModel:
    root: Node
    n_features: int
    train_stats: TrainStats

    @property
    def n_nodes(self) -> int:
        return _count_nodes(self.root)

    @property
    def n_leaves(self) -> int:
        return (_count_nodes(self.root) + 1) // 2


def _count_nodes(node: Node) -> int:
    if isinstance(node, Leaf):
        return 1
    return 1 + _count_nodes(node.left) + _count_nodes(node.right)


def _split_sse(X: np.ndarray, y: np.ndarray, feature: int, threshold: float) -> float:
    """Canonical child-SSE total: summed in global index order.

    Two candidates inducing the same partition (e.g. on different features)
    evaluate to bitwise-identical totals here, so the tie rule below sees
    mathematically equal splits as equal.
    """
    left = X[:, feature] < threshold
    yl = y[left]
    yr = y[~left]
    return float(np.sum((yl - yl.mean()) ** 2) + np.sum((yr - yr.mean()) ** 2))


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Return (total_sse, feature, threshold) of the best split, or None.

    Prefix sums over each feature's sort order rank that feature's candidates
    in one vectorized pass; the per-feature winners are then re-scored
    canonically and compared feature-ascending with strict improvement, which
    realizes the documented tie rule (lower feature, then lower threshold).
    """
    n = y.size
    yc = y - y.mean()  # SSE is shift-invariant; centering conditions the prefix sums
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = yc[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        total_sum = csum[-1]
        total_sq = csq[-1]

        i = np.arange(min_leaf, n - min_leaf + 1)  # left child sizes
        if i.size == 0:
            continue
        distinct = xs[i - 1] < xs[i]
        i = i[distinct]
        if i.size == 0:
            continue
        left_sum = csum[i - 1]
        left_sq = csq[i - 1]
        sse_left = left_sq - left_sum**2 / i
        sse_right = (total_sq - left_sq) - (total_sum - left_sum) ** 2 / (n - i)
        total = sse_left + sse_right
        split_at = int(i[int(np.argmin(total))])
        threshold = float((xs[split_at - 1] + xs[split_at]) / 2.0)
        sse = _split_sse(X, y, f, threshold)
        if best is None or sse < best[0]:
            best = (sse, f, threshold)
    return best


def _grow(X: np.ndarray, y: np.ndarray, params: TreeParams, depth: int) -> Node:
    n = y.size
    prediction = float(y.mean())
    if n < 2 * params.min_leaf or (params.max_depth is not None and depth >= params.max_depth):
        return Leaf(prediction, n)
    if y.min() == y.max():  # pure node; no split can reduce SSE
        return Leaf(prediction, n)
    best = _best_split(X, y, params.min_leaf)
    if best is None:
        return Leaf(prediction, n)
    total_sse, feature, threshold = best
    parent_sse = float(np.sum((y - prediction) ** 2))
    if not (parent_sse - total_sse > params.min_gain):
        return Leaf(prediction, n)
    go_left = X[:, feature] < threshold
    return Internal(
        feature,
        threshold,
        _grow(X[go_left], y[go_left], params, depth + 1),
        _grow(X[~go_left], y[~go_left], params, depth + 1),
    )


def _as_matrix(features) -> np.ndarray:
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, np.newaxis]
    if X.ndim != 2:
        raise ValidationError("features must be a vector or a matrix")
    return X


def fit(features, targets, params: TreeParams = TreeParams()) -> TreeModel:
    """Grow a regression tree on (features, targets).

    features: (n,) or (n, d) array; targets: (n,) array of mV values.
    """
    X = _as_matrix(features)
    y = np.asarray(targets, dtype=np.float64)
    if y.ndim != 1 or y.size == 0 or X.shape[0] != y.size:
        raise ValidationError("need a non-empty table with matching feature/target rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValidationError("features and targets must be finite")
    root = _grow(X, y, params, depth=0)
    residuals = predict_many_node(root, X) - y
    stats = TrainStats(
        rmse=float(np.sqrt(np.mean(residuals**2))),
        mae=float(np.mean(np.abs(residuals))),
        n=int(y.size),
    )
    return TreeModel(root=root, n_features=X.shape[1], train_stats=stats)


def predict(model: TreeModel, x) -> float:
    """Evaluate the tree at one input (left branch when value < threshold)."""
    xv = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if xv.shape != (model.n_features,):
        raise ValidationError(f"expected {model.n_features} feature(s), got shape {xv.shape}")
    node = model.root
    while isinstance(node, Internal):
        node = node.left if xv[node.feature] < node.threshold else node.right
    return node.prediction


def predict_many(model: TreeModel, features) -> np.ndarray:
    X = _as_matrix(features)
    if X.shape[1] != model.n_features:
        raise ValidationError(f"expected {model.n_features} feature(s), got {X.shape[1]}")
    return predict_many_node(model.root, X)


def predict_many_node(root: Node, X: np.ndarray) -> np.ndarray:
    """Vectorized evaluation: route index masks down the tree iteratively."""
    out = np.empty(X.shape[0])
    stack = [(root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        if isinstance(node, Leaf):
            out[idx] = node.prediction
            continue
        go_left = X[idx, node.feature] < node.threshold
        stack.append((node.left, idx[go_left]))
        stack.append((node.right, idx[~go_left]))
    return out


def evaluate(model: TreeModel, features, targets) -> dict:
    """Training-style error metrics of the model on a table: rmse and mae (mV)."""
    y = np.asarray(targets, dtype=np.float64)
    if y.size == 0:
        raise ValidationError("empty table")
    residuals = predict_many(model, features) - y
    return {
        "rmse": float(np.sqrt(np.mean(residuals**2))),
        "mae": float(np.mean(np.abs(residuals))),
    }
