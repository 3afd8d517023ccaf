"""From-scratch classifiers: boosted trees, elastic-net LR, random forest."""

import json
from pathlib import Path

from ..errors import ConfigError
from .elasticnet import ElasticNetModel, ElasticNetParams, train_elasticnet_lr
from .forest import RandomForestModel, RandomForestParams, train_random_forest
from .gbt import GbtModel, GbtParams, train_gbt
from .grid import (
    DEFAULT_GRIDS,
    GridSearchResult,
    expand_grid,
    grid_search,
    train_learner,
    make_params,
)

_MODEL_CLASSES = {
    "gbt": GbtModel,
    "elasticnet": ElasticNetModel,
    "random-forest": RandomForestModel,
}


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path):
    d = json.loads(Path(path).read_text())
    kind = d.get("kind")
    if kind not in _MODEL_CLASSES:
        raise ConfigError(f"unknown model kind {kind!r}")
    return _MODEL_CLASSES[kind].from_dict(d)


__all__ = [
    "DEFAULT_GRIDS",
    "ElasticNetModel",
    "ElasticNetParams",
    "GbtModel",
    "GbtParams",
    "GridSearchResult",
    "RandomForestModel",
    "RandomForestParams",
    "expand_grid",
    "grid_search",
    "load_model",
    "make_params",
    "save_model",
    "train_elasticnet_lr",
    "train_gbt",
    "train_random_forest",
    "train_learner",
]
