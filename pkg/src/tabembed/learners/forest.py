"""Random forest: bootstrap-sampled Gini trees, mean leaf frequencies.

With bootstrap disabled and max_features_fraction 1.0 a one-tree forest
degenerates to plain CART, which the tests compare against an
independent oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DimensionMismatch
from . import kernels
from .gbt import Tree, check_training_inputs

_CLIP = 1e-6


@dataclass(frozen=True)
class RandomForestParams:
    n_trees: int = 100
    max_depth: int = 10
    max_features_fraction: float = 1.0
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be >= 1")
        if self.max_depth < 1:
            raise ConfigError("max_depth must be >= 1")
        if not 0.0 < self.max_features_fraction <= 1.0:
            raise ConfigError("max_features_fraction must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "max_features_fraction": self.max_features_fraction,
            "bootstrap": self.bootstrap,
        }


@dataclass
class RandomForestModel:
    kind = "random-forest"
    trees: list
    params: RandomForestParams
    seed: int
    n_features: int
    metadata: dict = field(default_factory=dict)

    def _check(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} columns, got {X.shape}"
            )
        return X

    def predict_proba(self, X) -> np.ndarray:
        X = self._check(X)
        acc = np.zeros(X.shape[0], dtype=np.float64)
        for tree in self.trees:
            acc += tree.predict(X)
        return np.clip(acc / len(self.trees), _CLIP, 1.0 - _CLIP)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "format_version": 1,
            "params": self.params.to_dict(),
            "seed": self.seed,
            "n_features": self.n_features,
            "trees": [t.to_dict() for t in self.trees],
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestModel":
        return cls(
            trees=[Tree.from_dict(t) for t in d["trees"]],
            params=RandomForestParams(**d["params"]),
            seed=d["seed"],
            n_features=d["n_features"],
            metadata=dict(d.get("metadata", {})),
        )


def train_random_forest(
    X, y, params: RandomForestParams, seed: int = 0, metadata=None
) -> RandomForestModel:
    X, y = check_training_inputs(X, y)
    k = kernels.get_kernels()
    n = len(y)
    trees = []
    for t in range(params.n_trees):
        rng = np.random.default_rng([seed, t])
        if params.bootstrap:
            rows = rng.integers(0, n, n)
            Xt = np.ascontiguousarray(X[rows])
            yt = y[rows]
        else:
            Xt, yt = X, y
        # per-node feature subsets inside the kernel use this derived seed
        tree_seed = int(rng.integers(0, 2**63 - 1))
        feat, thr, left, right, value = k.build_tree_gini(
            Xt, yt, params.max_depth, params.max_features_fraction, tree_seed
        )
        trees.append(
            Tree(feature=feat, threshold=thr, left=left, right=right, value=value)
        )
    return RandomForestModel(
        trees=trees,
        params=params,
        seed=seed,
        n_features=X.shape[1],
        metadata=dict(metadata or {}),
    )
