"""Gradient-boosted trees on second-order logistic loss.

Leaf weights are -sum(g)/(sum(h)+lambda) with g = p - y and h = p(1-p);
splits are exact greedy over sorted unique values, admissible only when
each child's hessian sum reaches min_child_weight.  The base score is
the logit of the training base rate, and every tree's contribution is
scaled by the learning rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ConfigError, DegenerateLabels, DimensionMismatch, EmptyMatrix
from . import kernels

_PROB_EPS = 1e-12


@dataclass(frozen=True)
class GbtParams:
    n_estimators: int = 100
    max_depth: int = 5
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    lambda_l2: float = 1.0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.min_child_weight < 0:
            raise ConfigError("min_child_weight must be >= 0")
        if self.lambda_l2 < 0:
            raise ConfigError("lambda_l2 must be >= 0")

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "max_depth": self.max_depth,
            "learning_rate": self.learning_rate,
            "min_child_weight": self.min_child_weight,
            "lambda_l2": self.lambda_l2,
        }


@dataclass(frozen=True)
class Tree:
    """Flat tree arrays; `feature` is -1 at leaves, `value` is the leaf
    contribution (already scaled by the learning rate)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        k = kernels.get_kernels()
        return k.predict_tree(
            X, self.feature, self.threshold, self.left, self.right, self.value
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int32),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int32),
            right=np.asarray(d["right"], dtype=np.int32),
            value=np.asarray(d["value"], dtype=np.float64),
        )


def check_training_inputs(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise EmptyMatrix(f"bad training matrix shape {X.shape}")
    if X.shape[0] != len(y):
        raise DimensionMismatch(f"{X.shape[0]} rows but {len(y)} labels")
    if len(y) < 2:
        raise EmptyMatrix("need at least 2 training rows")
    if not np.all(np.isfinite(X)):
        raise EmptyMatrix("training matrix contains non-finite values")
    if y.min() == y.max():
        raise DegenerateLabels("training labels contain a single class")
    return X, y


def mean_logloss(margin: np.ndarray, y: np.ndarray) -> float:
    # log(1 + exp(-s*m)) computed stably via logaddexp
    signed = np.where(y == 1, -margin, margin)
    return float(np.logaddexp(0.0, signed).mean())


@dataclass
class GbtModel:
    kind = "gbt"
    base_score: float
    trees: list
    params: GbtParams
    seed: int
    n_features: int
    train_loss: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} columns, got {X.shape}"
            )
        return X

    def predict_margin(self, X) -> np.ndarray:
        X = self._check(X)
        margin = np.full(X.shape[0], self.base_score, dtype=np.float64)
        for tree in self.trees:
            margin += tree.predict(X)
        return margin

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(expit(self.predict_margin(X)), _PROB_EPS, 1.0 - _PROB_EPS)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "format_version": 1,
            "params": self.params.to_dict(),
            "base_score": self.base_score,
            "n_features": self.n_features,
            "seed": self.seed,
            "trees": [t.to_dict() for t in self.trees],
            "train_loss": list(self.train_loss),
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        return cls(
            base_score=d["base_score"],
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=GbtParams(**d["params"]),
            seed=d["seed"],
            n_features=d["n_features"],
            train_loss=list(d.get("train_loss", [])),
            metadata=dict(d.get("metadata", {})),
        )


def boost(
    X,
    y,
    params: GbtParams,
    n_rounds: int,
    eval_X=None,
    checkpoints=(),
):
    """Core boosting loop.

    Returns (base_score, trees, losses, staged) where `staged` maps each
    checkpoint round count to a copy of the eval-set margin at that
    point; prefixes of a longer run are exactly the shorter runs.
    """
    X, y = check_training_inputs(X, y)
    k = kernels.get_kernels()
    base_rate = float(y.mean())
    base = float(np.log(base_rate / (1.0 - base_rate)))

    margin = np.full(len(y), base, dtype=np.float64)
    eval_margin = None
    if eval_X is not None:
        eval_X = np.ascontiguousarray(eval_X, dtype=np.float64)
        eval_margin = np.full(eval_X.shape[0], base, dtype=np.float64)

    trees = []
    losses = []
    staged = {}
    checkpoints = set(checkpoints)
    for t in range(n_rounds):
        p = expit(margin)
        g = p - y
        h = p * (1.0 - p)
        feat, thr, left, right, value, row_pred = k.build_tree_logistic(
            X, g, h, params.max_depth, params.lambda_l2, params.min_child_weight
        )
        tree = Tree(
            feature=feat,
            threshold=thr,
            left=left,
            right=right,
            value=value * params.learning_rate,
        )
        trees.append(tree)
        margin += row_pred * params.learning_rate
        losses.append(mean_logloss(margin, y))
        if eval_margin is not None:
            eval_margin += tree.predict(eval_X)
            if t + 1 in checkpoints:
                staged[t + 1] = eval_margin.copy()
    return base, trees, losses, staged


def train_gbt(X, y, params: GbtParams, seed: int = 0, metadata=None) -> GbtModel:
    """Fit a boosted-tree classifier.  Training is deterministic; the seed
    is recorded for provenance only."""
    base, trees, losses, _ = boost(X, y, params, params.n_estimators)
    return GbtModel(
        base_score=base,
        trees=trees,
        params=params,
        seed=seed,
        n_features=np.asarray(X).shape[1],
        train_loss=losses,
        metadata=dict(metadata or {}),
    )
