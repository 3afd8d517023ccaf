import numpy as np
import pytest

from tabembed.errors import ConfigError
from tabembed.learners import DEFAULT_GRIDS, expand_grid, grid_search, train_gbt
from tabembed.learners.gbt import GbtParams
from tabembed.metrics import auroc
from tabembed.tabular import split_kfold


def dataset(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 3))
    logits = 1.5 * X[:, 0] - 1.0 * X[:, 1]
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
    folds = rng.integers(0, 3, n)
    return X, y, folds


class TestGridShapes:
    def test_default_gbt_grid_has_240_cells(self):
        assert len(expand_grid(DEFAULT_GRIDS["gbt"])) == 4 * 5 * 4 * 3 == 240

    def test_default_elasticnet_grid_has_9_cells(self):
        assert len(expand_grid(DEFAULT_GRIDS["elasticnet"])) == 9

    def test_empty_grid_rejected(self):
        X, y, folds = dataset()
        with pytest.raises(ConfigError):
            grid_search("gbt", {"n_estimators": []}, X, y, folds)


class TestGridSearch:
    def test_single_cell(self):
        X, y, folds = dataset()
        cell = {"n_estimators": [20], "max_depth": [2], "learning_rate": [0.1],
                "min_child_weight": [1]}
        result = grid_search("gbt", cell, X, y, folds)
        assert result.best_params == {
            "n_estimators": 20, "max_depth": 2, "learning_rate": 0.1,
            "min_child_weight": 1,
        }
        assert result.model is not None

    def test_prefix_sharing_equals_direct_training(self):
        # staged evaluation at n_estimators checkpoints must reproduce
        # separately trained models exactly
        X, y, folds = dataset(seed=3)
        grid = {"n_estimators": [5, 15], "max_depth": [3], "learning_rate": [0.1],
                "min_child_weight": [1]}
        result = grid_search("gbt", grid, X, y, folds)
        for cell in result.cells:
            params = GbtParams(**cell.params)
            direct = []
            for f in np.unique(folds):
                val = folds == f
                model = train_gbt(X[~val], y[~val], params)
                direct.append(auroc(model.predict_proba(X[val]), y[val]))
            assert cell.fold_metrics == pytest.approx(direct, abs=1e-12)

    def test_ties_keep_first_cell(self):
        X, y, folds = dataset(seed=4)
        # duplicate cells -> identical metrics -> argmax keeps the first
        grid = {"n_estimators": [10, 10], "max_depth": [2], "learning_rate": [0.1],
                "min_child_weight": [1]}
        result = grid_search("gbt", grid, X, y, folds)
        assert result.cells[0].mean_metric == result.cells[1].mean_metric
        assert result.best_params is result.cells[0].params

    def test_failed_cell_excluded(self):
        X, y, folds = dataset(seed=5)
        grid = {"alpha": [0.1, -1.0], "l1_ratio": [0.5]}
        result = grid_search("elasticnet", grid, X, y, folds)
        failed = [c for c in result.cells if c.failed]
        assert len(failed) == 1
        assert result.best_params == {"alpha": 0.1, "l1_ratio": 0.5}

    def test_all_failed_raises(self):
        X, y, folds = dataset(seed=6)
        with pytest.raises(ConfigError):
            grid_search("elasticnet", {"alpha": [-1.0], "l1_ratio": [0.5]}, X, y, folds)

    def test_foldplan_input(self, small_recordset):
        # FoldPlan + row ids path
        rs = small_recordset
        plan = split_kfold(rs, 2, seed=0)
        X = np.arange(8, dtype=float).reshape(4, 2)
        y = np.array(rs.tasks["sepsis"], dtype=float)
        result = grid_search(
            "gbt",
            {"n_estimators": [5], "max_depth": [1], "learning_rate": [0.5],
             "min_child_weight": [0]},
            X, y, plan, row_ids=rs.ids,
        )
        assert result.model is not None

    def test_unknown_learner_and_metric(self):
        X, y, folds = dataset()
        with pytest.raises(ConfigError):
            grid_search("svm", None, X, y, folds)
        with pytest.raises(ConfigError):
            grid_search("gbt", None, X, y, folds, metric="accuracy")

    def test_deterministic(self):
        X, y, folds = dataset(seed=7)
        grid = {"n_estimators": [10], "max_depth": [2, 3], "learning_rate": [0.1],
                "min_child_weight": [1]}
        a = grid_search("gbt", grid, X, y, folds)
        b = grid_search("gbt", grid, X, y, folds)
        assert a.best_params == b.best_params
        assert [c.fold_metrics for c in a.cells] == [c.fold_metrics for c in b.cells]

    def test_random_forest_path(self):
        X, y, folds = dataset(seed=8)
        grid = {"n_trees": [10], "max_depth": [3], "max_features_fraction": [1.0]}
        result = grid_search("random-forest", grid, X, y, folds)
        assert result.best_mean_metric > 0.5
