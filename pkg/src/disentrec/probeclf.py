"""Gradient-boosted decision-tree probes predicting binary factors from representations."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

DEFAULT_GRID = {"n_trees": (50, 100, 200), "max_depth": (2, 3, 4), "shrinkage": (0.05, 0.1)}


class DegenerateLabelsError(ValueError):
    pass


@dataclass
class RegressionTree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def apply(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            go_left = X[active, self.feature[nd]] <= self.threshold[nd]
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=np.int64), np.array(d["threshold"], dtype=np.float64),
                   np.array(d["left"], dtype=np.int64), np.array(d["right"], dtype=np.int64),
                   np.array(d["value"], dtype=np.float64))


@dataclass
class GbtModel:
    trees: list[RegressionTree]
    shrinkage: float
    max_depth: int
    init_score: float
    n_features: int
    importances: np.ndarray
    tree_gains: np.ndarray | None = field(repr=False, default=None)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def truncated(self, n_trees: int) -> "GbtModel":
        """The model after its first ``n_trees`` boosting stages."""
        gains = self.tree_gains[:n_trees]
        return GbtModel(self.trees[:n_trees], self.shrinkage, self.max_depth, self.init_score,
                        self.n_features, _normalize_gains(gains.sum(0)), gains)

    def decision_function(self, X, n_trees: int | None = None) -> np.ndarray:
        X = _as_2d(X, self.n_features)
        out = np.full(X.shape[0], self.init_score)
        for tree in self.trees[:n_trees]:
            out += self.shrinkage * tree.predict(X)
        return out

    def staged_decision(self, X, stages: Sequence[int]) -> dict[int, np.ndarray]:
        X = _as_2d(X, self.n_features)
        out = np.full(X.shape[0], self.init_score)
        res = {}
        wanted = set(stages)
        if 0 in wanted:
            res[0] = out.copy()
        for t, tree in enumerate(self.trees, start=1):
            out += self.shrinkage * tree.predict(X)
            if t in wanted:
                res[t] = out.copy()
        return res

    def predict_proba(self, X) -> np.ndarray:
        return _sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)

    def to_dict(self) -> dict:
        return {"shrinkage": self.shrinkage, "max_depth": self.max_depth, "init_score": self.init_score,
                "n_features": self.n_features, "importances": self.importances.tolist(),
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        trees = [RegressionTree.from_dict(t) for t in d["trees"]]
        imp = np.array(d["importances"], dtype=np.float64)
        return cls(trees, d["shrinkage"], d["max_depth"], d["init_score"], d["n_features"], imp)


def _normalize_gains(total: np.ndarray) -> np.ndarray:
    s = total.sum()
    return total / s if s > 0 else np.zeros_like(total)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


def _as_2d(X, n_features: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} features, got shape {X.shape}")
    return X


def predict_proba(model: GbtModel, x) -> float | np.ndarray:
    """Probability of the positive class; a scalar for a single vector."""
    x = np.asarray(x, dtype=np.float64)
    p = model.predict_proba(x)
    return float(p[0]) if x.ndim == 1 else p


class _TreeBuilder:
    """Exhaustive-threshold regression tree grower over presorted features."""

    def __init__(self, X: np.ndarray, max_depth: int, min_samples_leaf: int = 1):
        self.X = X
        self.n, self.m = X.shape
        self.order = np.argsort(X, axis=0, kind="stable").T.copy()  # M x n
        self.max_depth = max_depth
        self.min_leaf = min_samples_leaf
        self._feat_idx = np.arange(self.m)[:, None]

    def build(self, g: np.ndarray, h: np.ndarray, gain_out: np.ndarray) -> RegressionTree:
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        root = new_node()
        stack = [(root, np.ones(self.n, dtype=bool), 0)]
        while stack:
            node, mask, depth = stack.pop()
            count = int(mask.sum())
            gn = g[mask]
            hsum = float(h[mask].sum())
            value[node] = float(gn.sum()) / max(hsum, 1e-12)
            if depth >= self.max_depth or count < 2 * self.min_leaf or np.ptp(gn) == 0.0:
                continue
            split = self._best_split(g, mask, count)
            if split is None:
                continue
            f, thr, gain = split
            feature[node], threshold[node] = f, thr
            gain_out[f] += gain
            lmask = mask & (self.X[:, f] <= thr)
            rmask = mask & ~lmask
            left[node], right[node] = new_node(), new_node()
            # right pushed first so the left subtree is numbered first
            stack.append((right[node], rmask, depth + 1))
            stack.append((left[node], lmask, depth + 1))
        return RegressionTree(np.array(feature, dtype=np.int64), np.array(threshold),
                              np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
                              np.array(value))

    def _best_split(self, g, mask, count):
        sel = mask[self.order]
        O = self.order[sel].reshape(self.m, count)
        xs = self.X[O, self._feat_idx]
        cs = np.cumsum(g[O], axis=1)
        total = cs[:, -1:]
        nl = np.arange(1, count, dtype=np.float64)
        sl = cs[:, :-1]
        sr = total - sl
        gain = sl * sl / nl + sr * sr / (count - nl) - total * total / count
        valid = xs[:, :-1] < xs[:, 1:]
        if self.min_leaf > 1:
            valid[:, : self.min_leaf - 1] = False
            valid[:, count - self.min_leaf:] = False
        if not valid.any():
            return None
        gain = np.where(valid, gain, -np.inf)
        flat = int(np.argmax(gain))
        f, pos = divmod(flat, count - 1)
        thr = 0.5 * (xs[f, pos] + xs[f, pos + 1])
        if thr >= xs[f, pos + 1]:
            thr = xs[f, pos]
        return f, float(thr), max(float(gain[f, pos]), 0.0)


def fit_gbt(X, y, n_trees: int = 100, max_depth: int = 3, shrinkage: float = 0.1,
            seed: int = 0, min_samples_leaf: int = 1) -> GbtModel:
    """Boost regression trees on logistic-loss gradients with Newton leaf values.

    Split search is exhaustive over midpoints of sorted unique values, so the
    fit is deterministic; ``seed`` is kept for interface stability.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[1] < 1:
        raise ValueError("X must be n x M (M >= 1) matching y")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    rate = y.mean()
    if rate == 0.0 or rate == 1.0:
        raise DegenerateLabelsError("degenerate labels: only one class present")
    init = float(np.log(rate / (1.0 - rate)))
    builder = _TreeBuilder(X, max_depth, min_samples_leaf)
    F = np.full(len(y), init)
    gains = np.zeros((n_trees, X.shape[1]))
    trees = []
    for t in range(n_trees):
        p = _sigmoid(F)
        tree = builder.build(y - p, p * (1.0 - p), gains[t])
        trees.append(tree)
        F += shrinkage * tree.predict(X)
    return GbtModel(trees, shrinkage, max_depth, init, X.shape[1], _normalize_gains(gains.sum(0)), gains)


def logistic_loss(model: GbtModel, X, y, n_trees: int | None = None) -> float:
    z = model.decision_function(X, n_trees)
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def balanced_accuracy(y_true, y_pred) -> float:
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    rates = []
    if y_true.any():
        rates.append((y_pred & y_true).sum() / y_true.sum())
    if (~y_true).any():
        rates.append((~y_pred & ~y_true).sum() / (~y_true).sum())
    return float(np.mean(rates))


@dataclass
class ProbeSuite:
    probes: list[GbtModel]
    hyper: list[dict]
    val_balanced_accuracy: list[float]
    train_users: np.ndarray
    val_users: np.ndarray
    factor_labels: list[str] = field(default_factory=list)

    @property
    def K(self) -> int:
        return len(self.probes)

    def to_dict(self) -> dict:
        return {"factor_labels": self.factor_labels, "hyper": self.hyper,
                "val_balanced_accuracy": self.val_balanced_accuracy,
                "train_users": self.train_users.tolist(), "val_users": self.val_users.tolist(),
                "probes": [p.to_dict() for p in self.probes]}

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()))
        return path


def _grid_points(grid: dict) -> list[tuple[int, float]]:
    return list(itertools.product(grid["max_depth"], grid["shrinkage"]))


def fit_probe_suite(reps, factors, train_users, val_users, grid: dict | None = None,
                    seed: int = 0) -> ProbeSuite:
    """Tune one probe per factor on validation balanced accuracy, final fit on train users.

    ``reps`` is an n_users x M array (or an object with ``.values``); ``factors``
    an n_users x K binary array (or a FactorMatrix). For each (depth,
    shrinkage) the largest ensemble is grown once and every ``n_trees`` in the
    grid is scored from its staged predictions.
    """
    grid = dict(DEFAULT_GRID, **(grid or {}))
    Z = np.asarray(getattr(reps, "values", reps), dtype=np.float64)
    Y = np.asarray(getattr(factors, "memberships", factors))
    labels = list(getattr(factors, "labels", [f"factor_{j}" for j in range(Y.shape[1])]))
    train_users = np.asarray(train_users, dtype=np.int64)
    val_users = np.asarray(val_users, dtype=np.int64)
    if np.intersect1d(train_users, val_users).size:
        raise ValueError("train and validation users overlap")
    stages = sorted(set(int(t) for t in grid["n_trees"]))
    Xtr, Xva = Z[train_users], Z[val_users]
    probes, hypers, accs = [], [], []
    for j in range(Y.shape[1]):
        ytr, yva = Y[train_users, j], Y[val_users, j]
        best = None
        for depth, lr in _grid_points(grid):
            model = fit_gbt(Xtr, ytr, n_trees=stages[-1], max_depth=depth, shrinkage=lr, seed=seed)
            staged = model.staged_decision(Xva, stages)
            for t in stages:
                acc = balanced_accuracy(yva, staged[t] >= 0.0)
                if best is None or acc > best[0]:
                    best = (acc, {"n_trees": t, "max_depth": depth, "shrinkage": lr}, model)
        acc, hyper, model = best
        if hyper["n_trees"] != model.n_trees:
            model = model.truncated(hyper["n_trees"])
        probes.append(model)
        hypers.append(hyper)
        accs.append(acc)
    return ProbeSuite(probes, hypers, accs, train_users, val_users, labels)
