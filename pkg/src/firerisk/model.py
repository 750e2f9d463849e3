"""Risk classifiers built directly on numpy: CART decision trees with Gini
splitting, bootstrap-aggregated forests, and a gradient-descent logistic
baseline, plus stratified cross-validated grid search and backtesting.

Everything is deterministic: per-tree RNG substreams are seeded with
seed XOR tree_index, ties in split gain break toward the lower feature
index and then the lower threshold, and fold assignment is a pure
function of the seed.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .features import FeatureBuilder, FeatureSchema, TimeWindow, build_labels
from .metrics import DegenerateLabels, RocCurve, roc_and_auc, tpr_at_fpr


class EmptyData(ValueError):
    pass


class ColumnMismatch(ValueError):
    pass


class Divergence(RuntimeError):
    pass


class TooFewRows(ValueError):
    pass


# --- decision trees ------------------------------------------------------


@dataclass
class TreeNode:
    """Internal node (feature_index/threshold/left/right) or leaf
    (positive_fraction); n_train counts the training rows routed here."""

    n_train: int
    feature_index: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    positive_fraction: Optional[float] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature_index is None


@dataclass(frozen=True)
class TreeParams:
    max_depth: int = 10
    min_samples_split: int = 2
    features_per_split: Optional[int] = None  # None = ceil(sqrt(d))


def _best_split(X: np.ndarray, y: np.ndarray, idx: np.ndarray,
                feats: np.ndarray):
    """Best (feature, threshold) by Gini impurity over candidate midpoints.

    Candidates sit between consecutive distinct sorted values. Ties break
    toward the lower feature index, then the lower threshold: feats arrive
    sorted ascending and argmin returns the first minimum, which is also
    the lowest threshold because positions scan in ascending value order.
    """
    m = len(idx)
    sub = X[np.ix_(idx, feats)]
    order = np.argsort(sub, axis=0, kind="stable")
    sv = np.take_along_axis(sub, order, axis=0)
    sy = y[idx][order]

    cpos = np.cumsum(sy, axis=0, dtype=np.float64)
    total_pos = cpos[-1]
    ln = np.arange(1, m, dtype=np.float64)[:, None]
    lp = cpos[:-1]
    rn = m - ln
    rp = total_pos[None, :] - lp
    # Weighted child Gini. The parent impurity is constant across the node,
    # so minimizing this maximizes the gain with the same tie structure.
    gl = 2.0 * (lp / ln) * (1.0 - lp / ln)
    gr = 2.0 * (rp / rn) * (1.0 - rp / rn)
    child = (ln * gl + rn * gr) / m
    invalid = sv[1:] <= sv[:-1]
    child[invalid] = np.inf

    pos_best = np.argmin(child, axis=0)
    col = np.arange(len(feats))
    best_vals = child[pos_best, col]
    j = int(np.argmin(best_vals))
    if not np.isfinite(best_vals[j]):
        return None
    pos = int(pos_best[j])
    lo, hi = float(sv[pos, j]), float(sv[pos + 1, j])
    threshold = (lo + hi) / 2.0
    if threshold >= hi:  # adjacent floats: keep the partition non-empty
        threshold = lo
    return int(feats[j]), threshold


def train_tree(X: np.ndarray, y: np.ndarray, params: TreeParams,
               rng: np.random.Generator) -> TreeNode:
    """Greedy recursive CART on Gini impurity.

    At each node, features_per_split features are sampled without
    replacement; recursion stops at max_depth, purity, fewer than
    min_samples_split rows, or when no valid candidate split exists.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("X must be a non-empty 2-D array")
    if len(y) != len(X):
        raise ValueError("X and y length mismatch")
    d = X.shape[1]
    k = params.features_per_split or math.ceil(math.sqrt(d))
    k = min(k, d)

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        m = len(idx)
        pos = int(y[idx].sum())
        node = TreeNode(n_train=m, positive_fraction=pos / m)
        if depth >= params.max_depth or pos == 0 or pos == m \
                or m < params.min_samples_split:
            return node
        feats = np.sort(rng.choice(d, size=k, replace=False))
        found = _best_split(X, y, idx, feats)
        if found is None:
            return node
        feature, threshold = found
        mask = X[idx, feature] <= threshold
        node.feature_index = feature
        node.threshold = threshold
        node.positive_fraction = None
        node.left = build(idx[mask], depth + 1)
        node.right = build(idx[~mask], depth + 1)
        return node

    return build(np.arange(len(X)), 0)


def _flatten_tree(root: TreeNode):
    """Arrays (feature, threshold, left, right, value, n_train); leaves get
    feature -1 and child -1."""
    feature, threshold, left, right, value, n_train = [], [], [], [], [], []

    def walk(node: TreeNode) -> int:
        i = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(node.positive_fraction if node.is_leaf else 0.0)
        n_train.append(node.n_train)
        if not node.is_leaf:
            feature[i] = node.feature_index
            threshold[i] = node.threshold
            left[i] = walk(node.left)
            right[i] = walk(node.right)
        return i

    walk(root)
    return (np.array(feature, dtype=np.int64), np.array(threshold),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(value), np.array(n_train, dtype=np.int64))


def _tree_predict(flat, X: np.ndarray) -> np.ndarray:
    feature, threshold, left, right, value, _ = flat
    node = np.zeros(len(X), dtype=np.int64)
    active = feature[node] >= 0
    rows = np.arange(len(X))
    while np.any(active):
        idx = node[active]
        f = feature[idx]
        go_left = X[rows[active], f] <= threshold[idx]
        node[active] = np.where(go_left, left[idx], right[idx])
        active = feature[node] >= 0
    return value[node]


# --- random forest -------------------------------------------------------


@dataclass
class RandomForestModel:
    trees: list
    n_trees: int
    max_depth: int
    features_per_split: int
    min_samples_split: int
    seed: int
    bootstrap: bool
    column_names: list
    _flat: list = field(default_factory=list, repr=False)

    def _flats(self):
        if len(self._flat) != len(self.trees):
            self._flat = [_flatten_tree(t) for t in self.trees]
        return self._flat


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 200
    max_depth: int = 10
    min_samples_split: int = 2
    features_per_split: Optional[int] = None
    bootstrap: bool = True
    seed: int = 0


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng((seed ^ tree_index) & 0xFFFFFFFFFFFFFFFF)


def train_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig,
                 column_names: Optional[Sequence[str]] = None) -> RandomForestModel:
    """Bagged trees, each on its own seed-XOR-index substream.

    Trees are independent given their substreams, so any execution order
    (or none) reproduces the sequential result bit for bit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("X must be a non-empty 2-D array")
    n, d = X.shape
    k = cfg.features_per_split or math.ceil(math.sqrt(d))
    params = TreeParams(max_depth=cfg.max_depth,
                        min_samples_split=cfg.min_samples_split,
                        features_per_split=k)
    trees = []
    for i in range(cfg.n_trees):
        rng = _tree_rng(cfg.seed, i)
        if cfg.bootstrap:
            sample = rng.integers(0, n, size=n)
            trees.append(train_tree(X[sample], y[sample], params, rng))
        else:
            trees.append(train_tree(X, y, params, rng))
    names = list(column_names) if column_names is not None \
        else [f"f{j}" for j in range(d)]
    return RandomForestModel(
        trees=trees, n_trees=cfg.n_trees, max_depth=cfg.max_depth,
        features_per_split=k, min_samples_split=cfg.min_samples_split,
        seed=cfg.seed, bootstrap=cfg.bootstrap, column_names=names)


# --- logistic regression -------------------------------------------------


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2: float
    column_names: list


def logistic_loss_grad(weights: np.ndarray, bias: float, X: np.ndarray,
                       y: np.ndarray, l2: float):
    """Mean log-loss with an L2 penalty on the weights (bias unpenalized)."""
    z = X @ weights + bias
    # log(1 + exp(-|z|)) + max(0, -yz) form keeps this overflow-safe
    p = 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
                 + 0.5 * l2 * float(weights @ weights))
    resid = p - y
    grad_w = X.T @ resid / len(y) + l2 * weights
    grad_b = float(np.mean(resid))
    return loss, grad_w, grad_b


def train_logistic(X: np.ndarray, y: np.ndarray, l2: float = 0.1,
                   iters: int = 500, rate: float = 0.1,
                   column_names: Optional[Sequence[str]] = None) -> LogisticModel:
    """Full-batch gradient descent from zero initialization.

    Raises Divergence if the loss increases for 10 consecutive iterations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyData("X must be a non-empty 2-D array")
    w = np.zeros(X.shape[1])
    b = 0.0
    prev_loss = np.inf
    rising = 0
    for _ in range(iters):
        loss, gw, gb = logistic_loss_grad(w, b, X, y, l2)
        if loss > prev_loss:
            rising += 1
            if rising >= 10:
                raise Divergence(f"loss increased 10 consecutive iterations (rate={rate})")
        else:
            rising = 0
        prev_loss = loss
        w = w - rate * gw
        b = b - rate * gb
    names = list(column_names) if column_names is not None \
        else [f"f{j}" for j in range(X.shape[1])]
    return LogisticModel(weights=w, bias=b, l2=l2, column_names=names)


# --- prediction ----------------------------------------------------------


def predict_proba(model, X: np.ndarray) -> np.ndarray:
    """Mean leaf fraction (forest) or sigmoid(w.x + b) (logistic)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(model.column_names):
        raise ColumnMismatch(
            f"X has {X.shape[1] if X.ndim == 2 else '?'} columns, "
            f"model expects {len(model.column_names)}")
    if isinstance(model, RandomForestModel):
        total = np.zeros(len(X))
        for flat in model._flats():
            total += _tree_predict(flat, X)
        return total / len(model.trees)
    if isinstance(model, LogisticModel):
        z = X @ model.weights + model.bias
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))
    raise TypeError(f"unknown model type {type(model)!r}")


# --- cross-validated grid search ------------------------------------------


def stratified_folds(y: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """k folds with sizes differing by <= 1 and positive counts differing
    by <= 1; deterministic in the seed."""
    y = np.asarray(y)
    n = len(y)
    if k > n:
        raise TooFewRows(f"cannot make {k} folds from {n} rows")
    rng = np.random.default_rng(seed)
    pos = rng.permutation(np.nonzero(y == 1)[0])
    neg = rng.permutation(np.nonzero(y != 1)[0])
    folds: list[list[int]] = [[] for _ in range(k)]
    ptr = 0
    for idx in itertools.chain(pos, neg):
        folds[ptr].append(int(idx))
        ptr = (ptr + 1) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass
class GridSearchResult:
    best_params: dict
    best_score: float
    cells: list  # [(params, mean AUC)]


def grid_search_cv(X: np.ndarray, y: np.ndarray,
                   trainer: Callable, grid: dict,
                   k: int = 10, seed: int = 0) -> GridSearchResult:
    """Exhaustive grid over the given parameter lists, scored by mean
    validation AUC over stratified k folds. Ties keep the first cell in
    grid order."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    folds = stratified_folds(y, k, seed)
    keys = list(grid.keys())
    cells = []
    best_params = None
    best_score = -np.inf
    for combo in itertools.product(*(grid[key] for key in keys)):
        params = dict(zip(keys, combo))
        scores = []
        for fold in folds:
            mask = np.ones(len(y), dtype=bool)
            mask[fold] = False
            model = trainer(X[mask], y[mask], **params)
            try:
                _, auc = roc_and_auc(predict_proba(model, X[fold]), y[fold])
            except DegenerateLabels:
                continue  # fold has a single class; it cannot score
            scores.append(auc)
        if not scores:
            raise DegenerateLabels("no fold had both classes")
        mean_auc = float(np.mean(scores))
        cells.append((params, mean_auc))
        if mean_auc > best_score:
            best_score = mean_auc
            best_params = params
    return GridSearchResult(best_params=best_params, best_score=best_score,
                            cells=cells)


# --- reports --------------------------------------------------------------


@dataclass
class EvalReport:
    auc: float
    tpr_at_fpr: dict
    importances: list  # [(feature, weight)] descending
    roc: Optional[RocCurve] = None


def feature_importance(model: RandomForestModel) -> list[tuple[str, float]]:
    """Per tree: a feature scores the fraction of training rows routed
    through nodes that split on it; averaged over trees, normalized to sum
    to 1, ties alphabetical."""
    d = len(model.column_names)
    totals = np.zeros(d)
    for root in model.trees:
        counts = np.zeros(d)
        stack = [root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                continue
            counts[node.feature_index] += node.n_train
            stack.append(node.left)
            stack.append(node.right)
        totals += counts / root.n_train
    totals /= len(model.trees)
    s = totals.sum()
    if s > 0:
        totals = totals / s
    ranked = sorted(zip(model.column_names, totals), key=lambda t: (-t[1], t[0]))
    return [(name, float(w)) for name, w in ranked]


def logistic_weight_report(model: LogisticModel, top_k: int = 10):
    """Top-k most positive and most negative signed weights."""
    pairs = list(zip(model.column_names, model.weights))
    by_weight = sorted(pairs, key=lambda t: (-t[1], t[0]))
    top_pos = [(n, float(w)) for n, w in by_weight[:top_k] if w > 0]
    by_weight_asc = sorted(pairs, key=lambda t: (t[1], t[0]))
    top_neg = [(n, float(w)) for n, w in by_weight_asc[:top_k] if w < 0]
    return top_pos, top_neg


def evaluate_scores(scores: np.ndarray, labels: np.ndarray,
                    fprs: Sequence[float] = (0.1, 0.2, 0.3),
                    importances: Optional[list] = None,
                    keep_roc: bool = True) -> EvalReport:
    curve, auc = roc_and_auc(scores, labels)
    return EvalReport(auc=auc,
                      tpr_at_fpr={f: tpr_at_fpr(curve, f) for f in fprs},
                      importances=importances or [],
                      roc=curve if keep_roc else None)


DEFAULT_FOREST_GRID = {"max_depth": [5, 10, 15], "n_trees": [100, 200]}
DEFAULT_LOGISTIC_GRID = {"l2": [0.01, 0.1, 1.0]}


@dataclass
class BacktestWindow:
    train_window: TimeWindow
    test_window: TimeWindow
    forest: EvalReport
    logistic: EvalReport
    forest_params: dict
    logistic_params: dict


def yearly_backtest(records: Sequence, fires: Sequence,
                    schema: FeatureSchema,
                    windows: Sequence[tuple[TimeWindow, TimeWindow]],
                    forest_grid: Optional[dict] = None,
                    logistic_grid: Optional[dict] = None,
                    seed: int = 0, k: int = 10,
                    fprs: Sequence[float] = (0.1, 0.2, 0.3),
                    logistic_iters: int = 300,
                    logistic_rate: float = 0.1) -> list[BacktestWindow]:
    """Grid-search, refit, and test each (train window, test year) pair.

    The same properties appear in train and test; only the label window
    moves, so nothing from the test period leaks into the matrix.
    """
    for i, (_, test) in enumerate(windows):
        for _, other in windows[i + 1:]:
            if test.start < other.end and other.start < test.end:
                raise ValueError("test windows must not overlap")
        if windows[i][0].end > test.start:
            raise ValueError("train window must end before its test window")
    forest_grid = forest_grid or DEFAULT_FOREST_GRID
    logistic_grid = logistic_grid or DEFAULT_LOGISTIC_GRID

    matrix = FeatureBuilder(schema).fit_transform(records)
    fires = list(fires)
    out = []
    for train_w, test_w in windows:
        y_train = build_labels(fires, matrix.property_ids, train_w)
        y_test = build_labels(fires, matrix.property_ids, test_w)

        def forest_trainer(Xt, yt, **params):
            return train_forest(Xt, yt, ForestConfig(seed=seed, **params),
                                matrix.column_names)

        def logistic_trainer(Xt, yt, **params):
            return train_logistic(Xt, yt, iters=logistic_iters,
                                  rate=logistic_rate,
                                  column_names=matrix.column_names, **params)

        f_search = grid_search_cv(matrix.values, y_train, forest_trainer,
                                  forest_grid, k=k, seed=seed)
        forest = forest_trainer(matrix.values, y_train, **f_search.best_params)
        l_search = grid_search_cv(matrix.values, y_train, logistic_trainer,
                                  logistic_grid, k=k, seed=seed)
        logistic = logistic_trainer(matrix.values, y_train, **l_search.best_params)

        out.append(BacktestWindow(
            train_window=train_w, test_window=test_w,
            forest=evaluate_scores(predict_proba(forest, matrix.values), y_test,
                                   fprs, feature_importance(forest)),
            logistic=evaluate_scores(predict_proba(logistic, matrix.values), y_test,
                                     fprs,
                                     [(n, float(abs(w))) for n, w in
                                      sorted(zip(logistic.column_names, logistic.weights),
                                             key=lambda t: (-abs(t[1]), t[0]))]),
            forest_params=f_search.best_params,
            logistic_params=l_search.best_params))
    return out


# --- serialization ---------------------------------------------------------

MODEL_FORMAT = "firerisk-model"
MODEL_VERSION = 1


def _tree_to_doc(root: TreeNode) -> dict:
    feature, threshold, left, right, value, n_train = _flatten_tree(root)
    return {"feature": feature.tolist(), "threshold": threshold.tolist(),
            "left": left.tolist(), "right": right.tolist(),
            "value": value.tolist(), "n_train": n_train.tolist()}


def _doc_to_tree(doc: dict) -> TreeNode:
    def build(i: int) -> TreeNode:
        if doc["feature"][i] < 0:
            return TreeNode(n_train=doc["n_train"][i],
                            positive_fraction=doc["value"][i])
        return TreeNode(n_train=doc["n_train"][i],
                        feature_index=doc["feature"][i],
                        threshold=doc["threshold"][i],
                        left=build(doc["left"][i]),
                        right=build(doc["right"][i]))
    return build(0)


def model_to_dict(model) -> dict:
    if isinstance(model, RandomForestModel):
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "kind": "random_forest",
                "columnNames": model.column_names,
                "nTrees": model.n_trees, "maxDepth": model.max_depth,
                "featuresPerSplit": model.features_per_split,
                "minSamplesSplit": model.min_samples_split,
                "bootstrap": model.bootstrap, "seed": model.seed,
                "trees": [_tree_to_doc(t) for t in model.trees]}
    if isinstance(model, LogisticModel):
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "kind": "logistic",
                "columnNames": model.column_names,
                "weights": model.weights.tolist(), "bias": model.bias,
                "l2": model.l2}
    raise TypeError(f"unknown model type {type(model)!r}")


def model_from_dict(doc: dict):
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError("not a model document")
    if doc.get("version") != MODEL_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')}")
    if doc["kind"] == "random_forest":
        return RandomForestModel(
            trees=[_doc_to_tree(t) for t in doc["trees"]],
            n_trees=doc["nTrees"], max_depth=doc["maxDepth"],
            features_per_split=doc["featuresPerSplit"],
            min_samples_split=doc["minSamplesSplit"],
            seed=doc["seed"], bootstrap=doc["bootstrap"],
            column_names=doc["columnNames"])
    if doc["kind"] == "logistic":
        return LogisticModel(weights=np.array(doc["weights"], dtype=float),
                             bias=float(doc["bias"]), l2=float(doc["l2"]),
                             column_names=doc["columnNames"])
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def save_model(model, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)
        fh.write("\n")


def load_model(path: str):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
