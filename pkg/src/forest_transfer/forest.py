"""Bagged regression trees (random forest) with OOB diagnostics.

Randomness
----------
Tree ``t`` of a forest fitted with seed ``s`` draws from a PCG64 generator
seeded by ``SeedSequence(s, spawn_key=(t,))``: the bootstrap sample first,
then one feature subset per node in depth-first, left-first order.
Permutation importance uses ``SeedSequence(seed, spawn_key=(t,))`` for the
column shuffles of tree ``t``. Trees are therefore independent of the
order (or the thread) in which they are grown.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import DataError
from .metrics import r_squared, rmse

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 500
    mtry: int | None = None
    min_node_size: int = 5
    seed: int = 7
    bootstrap: bool = True

    def resolved_mtry(self, p: int) -> int:
        m = max(1, p // 3) if self.mtry is None else self.mtry
        if not 1 <= m <= p:
            raise DataError(f"mtry must lie in [1, {p}], got {m}")
        return m


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


@dataclass(frozen=True)
class Tree:
    """Flattened CART tree; ``feature[i] < 0`` marks a leaf.

    Rows with ``x[feature] < threshold`` descend to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf predictions for every row of X."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            f = self.feature[cur]
            go_left = X[active, f] < self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.array(d["feature"], dtype=np.intp), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=np.intp), np.array(d["right"], dtype=np.intp),
                   np.array(d["value"], dtype=float))


def _best_split(xs: np.ndarray, ys: np.ndarray):
    """Best threshold on one feature: (sse, threshold) or None."""
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    ys = ys[order]
    n = len(xs)
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None
    cs = np.cumsum(ys)
    cs2 = np.cumsum(ys * ys)
    nl = np.arange(1, n, dtype=float)
    nr = n - nl
    sl = cs[:-1]
    sse = (cs2[:-1] - sl * sl / nl) + ((cs2[-1] - cs2[:-1]) - (cs[-1] - sl) ** 2 / nr)
    sse = np.where(distinct, sse, np.inf)
    i = int(np.argmin(sse))
    return sse[i], 0.5 * (xs[i] + xs[i + 1])


def grow_tree(X: np.ndarray, y: np.ndarray, mtry: int, min_node_size: int,
              rng: np.random.Generator) -> Tree:
    """Grow one unpruned regression tree on (X, y).

    Nodes with fewer than ``2 * min_node_size`` samples or constant response
    become leaves. At each node ``mtry`` features are drawn without
    replacement; the split minimizing the summed within-child squared
    deviation wins, ties going to the lowest feature index and then the
    lowest threshold.
    """
    p = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(np.mean(y[idx])))
        return len(feature) - 1

    root = new_node(np.arange(len(y)))
    stack = [(root, np.arange(len(y)))]
    while stack:
        node, idx = stack.pop()
        yi = y[idx]
        if len(idx) < 2 * min_node_size or yi.max() == yi.min():
            continue
        cand = np.sort(rng.choice(p, size=mtry, replace=False))
        best = None
        for j in cand:
            res = _best_split(X[idx, j], yi)
            if res is not None and (best is None or res[0] < best[0]):
                best = (res[0], int(j), res[1])
        if best is None:
            continue
        _, j, thr = best
        mask = X[idx, j] < thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = j, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree is expanded first
        stack.append((right[node], ri))
        stack.append((left[node], li))
    return Tree(np.array(feature, dtype=np.intp), np.array(threshold, dtype=float),
                np.array(left, dtype=np.intp), np.array(right, dtype=np.intp),
                np.array(value, dtype=float))


@dataclass
class Forest:
    trees: list
    columns: tuple
    hyperparameters: Hyperparameters
    y_range: tuple
    oob_predictions: np.ndarray | None = None
    importance: np.ndarray | None = None
    inbag: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.columns)

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return predict(self, X, threads=threads)

    def to_dict(self) -> dict:
        hp = self.hyperparameters
        return {
            "format": "forest-transfer/forest",
            "version": FORMAT_VERSION,
            "columns": list(self.columns),
            "hyperparameters": {"n_trees": hp.n_trees, "mtry": hp.mtry,
                                "min_node_size": hp.min_node_size, "seed": hp.seed,
                                "bootstrap": hp.bootstrap},
            "y_range": [float(v) for v in self.y_range],
            "oob_predictions": None if self.oob_predictions is None else
            [None if not np.isfinite(v) else float(v) for v in self.oob_predictions],
            "importance": None if self.importance is None else self.importance.tolist(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format") != "forest-transfer/forest" or d.get("version") != FORMAT_VERSION:
            raise DataError("not a forest model document of a supported version")
        oob = d.get("oob_predictions")
        imp = d.get("importance")
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            columns=tuple(d["columns"]),
            hyperparameters=Hyperparameters(**d["hyperparameters"]),
            y_range=tuple(d["y_range"]),
            oob_predictions=None if oob is None else
            np.array([np.nan if v is None else v for v in oob], dtype=float),
            importance=None if imp is None else np.array(imp, dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        return cls.from_dict(json.loads(text))


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("empty design matrix")
    if y.shape != (X.shape[0],):
        raise DataError("response length does not match design rows")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite value in design matrix or response")
    return X, y


def fit_forest(X, y, hp: Hyperparameters = Hyperparameters(), columns: Sequence[str] | None = None,
               row_keys: Sequence | None = None, threads: int = 1) -> Forest:
    """Fit a random forest of regression trees.

    Parameters
    ----------
    X, y : design matrix (n, p) and responses (n,).
    hp : tree count, features tried per node, minimum node size, seed.
    columns : design column names stored with the model.
    row_keys : optional stable row identifiers (e.g. plot ids). When given,
        rows are put in key order before bootstrapping, so the fitted forest
        does not depend on the order rows were supplied in.
    threads : worker threads; results are identical for any value.
    """
    X, y = _check_xy(X, y)
    n, p = X.shape
    if hp.n_trees < 1:
        raise DataError("n_trees must be >= 1")
    if n < hp.min_node_size:
        raise DataError(f"need at least min_node_size={hp.min_node_size} rows, got {n}")
    mtry = hp.resolved_mtry(p)
    columns = tuple(columns) if columns is not None else tuple(f"x{i}" for i in range(p))
    if len(columns) != p:
        raise DataError("column names do not match design width")

    order = np.argsort(np.asarray(row_keys, dtype=str), kind="stable") if row_keys is not None \
        else np.arange(n)
    Xs, ys = X[order], y[order]

    def one(t):
        rng = tree_rng(hp.seed, t)
        if hp.bootstrap:
            draws = rng.integers(0, n, size=n)
        else:
            draws = np.arange(n)
        tree = grow_tree(Xs[draws], ys[draws], mtry, hp.min_node_size, rng)
        counts = np.bincount(draws, minlength=n)
        oob = np.flatnonzero(counts == 0)
        return tree, counts, oob, tree.apply(Xs[oob])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(one, range(hp.n_trees)))
    else:
        results = [one(t) for t in range(hp.n_trees)]

    oob_sum = np.zeros(n)
    oob_cnt = np.zeros(n)
    for _, _, oob, pred in results:
        oob_sum[oob] += pred
        oob_cnt[oob] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        oob_pred = np.where(oob_cnt > 0, oob_sum / oob_cnt, np.nan)
    inbag = np.stack([r[1] for r in results]).astype(np.int32)
    # back to caller row order
    inv = np.empty(n, dtype=np.intp)
    inv[order] = np.arange(n)
    return Forest(
        trees=[r[0] for r in results],
        columns=columns,
        hyperparameters=hp,
        y_range=(float(y.min()), float(y.max())),
        oob_predictions=np.clip(oob_pred[inv], y.min(), y.max()),
        inbag=inbag[:, inv],
    )


def predict(forest: Forest, X, threads: int = 1) -> np.ndarray:
    """Ensemble mean of tree predictions for a vector or a matrix of rows.

    Tree outputs are accumulated in tree order, so every row's value is the
    same whatever the batch it is predicted in.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X2 = X[None, :] if single else X
    if X2.ndim != 2 or X2.shape[1] != forest.n_features:
        raise DataError(f"expected {forest.n_features} features per row, got {X2.shape[-1]}")

    def block(rows):
        total = np.zeros(rows.shape[0])
        for tree in forest.trees:
            total += tree.apply(rows)
        return total

    if threads > 1 and X2.shape[0] > 1:
        chunks = np.array_split(np.arange(X2.shape[0]), threads)
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(lambda c: block(X2[c]), chunks))
        total = np.concatenate(parts)
    else:
        total = block(X2)
    lo, hi = forest.y_range
    out = np.clip(total / len(forest.trees), lo, hi)
    return out[0] if single else out


def _require_inbag(forest: Forest, n: int):
    if forest.inbag is None:
        raise DataError("forest carries no in-bag record; refit it to compute OOB quantities")
    if forest.inbag.shape[1] != n:
        raise DataError("data rows do not match the forest's training rows")


def permutation_importance(forest: Forest, X, y, seed: int = 0) -> np.ndarray:
    """Mean over trees of the OOB MSE increase after permuting each column.

    `X` and `y` must be the training data the forest was fitted on.
    """
    X, y = _check_xy(X, y)
    _require_inbag(forest, len(y))
    p = X.shape[1]
    sums = np.zeros(p)
    used = 0
    for t, tree in enumerate(forest.trees):
        oob = np.flatnonzero(forest.inbag[t] == 0)
        if oob.size < 2:
            continue
        rng = tree_rng(seed, t)
        Xo, yo = X[oob], y[oob]
        base = np.mean((yo - tree.apply(Xo)) ** 2)
        for j in range(p):
            Xp = Xo.copy()
            Xp[:, j] = Xo[rng.permutation(oob.size), j]
            sums[j] += np.mean((yo - tree.apply(Xp)) ** 2) - base
        used += 1
    if used == 0:
        raise DataError("no tree has out-of-bag rows; increase n_trees")
    return sums / used


@dataclass(frozen=True)
class OOBError:
    rmse: float
    r2: float


def oob_error(forest: Forest, y) -> OOBError:
    """RMSE (n-1 denominator) and R² of the out-of-bag predictions."""
    y = np.asarray(y, dtype=float)
    if forest.oob_predictions is None or len(forest.oob_predictions) != len(y):
        raise DataError("forest has no OOB predictions for these rows")
    missing = ~np.isfinite(forest.oob_predictions)
    if missing.any():
        raise DataError(
            f"{int(missing.sum())} plot(s) were never out-of-bag; fit with more trees"
        )
    return OOBError(rmse=rmse(y, forest.oob_predictions), r2=r_squared(y, forest.oob_predictions))
