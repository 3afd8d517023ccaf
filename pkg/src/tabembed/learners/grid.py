"""Grid search over learner hyperparameters by mean validation AUROC.

Cells are enumerated in key-insertion/product order; argmax ties keep
the earliest cell.  For boosted trees, cells differing only in
n_estimators share one training run per fold: the staged margins of the
longest run reproduce the shorter runs exactly because boosting is
sequential and deterministic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError, TabembedError
from ..metrics import auroc
from ..tabular import FoldPlan
from .elasticnet import ElasticNetParams, train_elasticnet_lr
from .forest import RandomForestParams, train_random_forest
from .gbt import GbtParams, boost, train_gbt

LEARNERS = ("gbt", "elasticnet", "random-forest")

# the shipped default grids (240 cells for gbt, 9 for elasticnet)
DEFAULT_GRIDS = {
    "gbt": {
        "n_estimators": [50, 100, 250, 500],
        "max_depth": [2, 5, 10, 15, 20],
        "learning_rate": [0.005, 0.01, 0.05, 0.1],
        "min_child_weight": [1, 2, 3],
    },
    "elasticnet": {
        "alpha": [0.1, 0.5, 1.0],
        "l1_ratio": [0.1, 0.5, 0.9],
    },
    "random-forest": {
        "n_trees": [100, 250],
        "max_depth": [5, 10, 20],
        "max_features_fraction": [0.3, 1.0],
    },
}


def expand_grid(grid: dict) -> list:
    keys = list(grid.keys())
    cells = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        cells.append(dict(zip(keys, combo)))
    return cells


def make_params(learner: str, cell: dict):
    if learner == "gbt":
        return GbtParams(**cell)
    if learner == "elasticnet":
        return ElasticNetParams(**cell)
    if learner == "random-forest":
        return RandomForestParams(**cell)
    raise ConfigError(f"unknown learner {learner!r}")


def train_learner(learner: str, X, y, params, seed: int = 0, metadata=None):
    if learner == "gbt":
        return train_gbt(X, y, params, seed=seed, metadata=metadata)
    if learner == "elasticnet":
        return train_elasticnet_lr(X, y, params, seed=seed, metadata=metadata)
    if learner == "random-forest":
        return train_random_forest(X, y, params, seed=seed, metadata=metadata)
    raise ConfigError(f"unknown learner {learner!r}")


@dataclass
class CellResult:
    params: dict
    fold_metrics: list = field(default_factory=list)
    mean_metric: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "fold_metrics": list(self.fold_metrics),
            "mean_metric": self.mean_metric,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass
class GridSearchResult:
    learner: str
    metric: str
    cells: list
    best_params: dict
    best_mean_metric: float
    model: object

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "metric": self.metric,
            "cells": [c.to_dict() for c in self.cells],
            "best_params": dict(self.best_params),
            "best_mean_metric": self.best_mean_metric,
        }


def _fold_indices(folds, n: int, row_ids=None) -> np.ndarray:
    if isinstance(folds, FoldPlan):
        if row_ids is None:
            raise ConfigError("row_ids required when folds is a FoldPlan")
        return np.asarray([folds.assignments[r] for r in row_ids], dtype=np.int64)
    arr = np.asarray(folds, dtype=np.int64)
    if len(arr) != n:
        raise ConfigError("fold index array length must match rows")
    return arr


def _gbt_grouped_metrics(cells, X, y, fold_idx, metric_fn):
    """Evaluate all gbt cells, sharing boosting runs across n_estimators."""
    results = {i: CellResult(params=c) for i, c in enumerate(cells)}
    groups: dict[tuple, list] = {}
    for i, c in enumerate(cells):
        key = tuple(sorted((k, v) for k, v in c.items() if k != "n_estimators"))
        groups.setdefault(key, []).append(i)

    for members in groups.values():
        checkpoints = sorted({cells[i]["n_estimators"] for i in members})
        params = GbtParams(**{**cells[members[0]], "n_estimators": checkpoints[-1]})
        for f in np.unique(fold_idx):
            val = fold_idx == f
            try:
                _, _, _, staged = boost(
                    X[~val],
                    y[~val],
                    params,
                    checkpoints[-1],
                    eval_X=X[val],
                    checkpoints=checkpoints,
                )
                scores = {n: metric_fn(staged[n], y[val]) for n in checkpoints}
            except TabembedError as e:
                for i in members:
                    results[i].failed = True
                    results[i].error = f"fold {f}: {e}"
                break
            for i in members:
                results[i].fold_metrics.append(scores[cells[i]["n_estimators"]])
    return [results[i] for i in range(len(cells))]


def grid_search(
    learner: str,
    grid: Optional[dict],
    X,
    y,
    folds,
    metric: str = "auroc",
    seed: int = 0,
    row_ids=None,
) -> GridSearchResult:
    """Evaluate every grid cell by mean validation AUROC across folds and
    refit the best cell on the full data.  Deterministic given the seed."""
    if metric != "auroc":
        raise ConfigError(f"unsupported metric {metric!r}")
    if learner not in LEARNERS:
        raise ConfigError(f"unknown learner {learner!r}")
    if grid is None:
        grid = DEFAULT_GRIDS[learner]
    cells = expand_grid(grid)
    if not cells:
        raise ConfigError("grid is empty")

    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    fold_idx = _fold_indices(folds, len(y), row_ids)

    if learner == "gbt":
        cell_results = _gbt_grouped_metrics(cells, X, y, fold_idx, auroc)
    else:
        cell_results = []
        for cell in cells:
            res = CellResult(params=cell)
            try:
                params = make_params(learner, cell)
                for f in np.unique(fold_idx):
                    val = fold_idx == f
                    model = train_learner(learner, X[~val], y[~val], params, seed)
                    res.fold_metrics.append(auroc(model.predict_proba(X[val]), y[val]))
            except TabembedError as e:
                res.failed = True
                res.error = str(e)
            cell_results.append(res)

    best_i = None
    for i, res in enumerate(cell_results):
        if res.failed:
            continue
        res.mean_metric = float(np.mean(res.fold_metrics))
        if best_i is None or res.mean_metric > cell_results[best_i].mean_metric:
            best_i = i
    if best_i is None:
        raise ConfigError("every grid cell failed")

    best_params = cells[best_i]
    model = train_learner(learner, X, y, make_params(learner, best_params), seed)
    return GridSearchResult(
        learner=learner,
        metric=metric,
        cells=cell_results,
        best_params=best_params,
        best_mean_metric=cell_results[best_i].mean_metric,
        model=model,
    )
