import numpy as np
import pytest

from tabembed.learners import RandomForestParams, train_random_forest
from tabembed.metrics import auroc


def cart_oracle(X, y, max_depth):
    """Plain recursive CART on Gini, written independently of the kernels."""

    def gini_split_cost(y_left, y_right):
        cost = 0.0
        for part in (y_left, y_right):
            m = len(part)
            if m == 0:
                return np.inf
            p = part.mean()
            cost += m * 2 * p * (1 - p)
        return cost

    def build(rows, depth):
        y_node = y[rows]
        leaf = y_node.mean()
        if depth >= max_depth or len(rows) < 2 or leaf in (0.0, 1.0):
            return ("leaf", leaf)
        parent = len(rows) * 2 * leaf * (1 - leaf)
        best = None
        for f in range(X.shape[1]):
            vals = X[rows, f]
            for t in np.unique(vals)[:-1]:
                thr = None
                uniq = np.unique(vals)
                k = np.where(uniq == t)[0][0]
                thr = 0.5 * (uniq[k] + uniq[k + 1])
                mask = vals < thr
                cost = gini_split_cost(y_node[mask], y_node[~mask])
                if cost < parent - 1e-12 and (best is None or cost < best[0] - 0.0):
                    best = (cost, f, thr)
        if best is None:
            return ("leaf", leaf)
        _, f, thr = best
        mask = X[rows, f] < thr
        return ("node", f, thr, build(rows[mask], depth + 1), build(rows[~mask], depth + 1))

    tree = build(np.arange(len(y)), 0)

    def predict_one(x, node):
        if node[0] == "leaf":
            return node[1]
        _, f, thr, left, right = node
        return predict_one(x, left if x[f] < thr else right)

    return lambda Xq: np.array([predict_one(x, tree) for x in Xq])


def xor_data(n, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0)).astype(float)
    return X, y


class TestRandomForest:
    def test_single_tree_matches_cart_oracle(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(80, 3))
        y = (X[:, 0] + 0.5 * X[:, 1] + 0.3 * rng.normal(size=80) > 0).astype(float)
        params = RandomForestParams(
            n_trees=1, max_depth=4, max_features_fraction=1.0, bootstrap=False
        )
        model = train_random_forest(X, y, params, seed=1)
        oracle = cart_oracle(X, y, max_depth=4)
        preds = model.predict_proba(X)
        expected = np.clip(oracle(X), 1e-6, 1 - 1e-6)
        assert np.allclose(preds, expected, atol=1e-12)

    def test_duplicated_rows_invariance(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(50, 3))
        y = (X[:, 0] > 0).astype(float)
        params = RandomForestParams(
            n_trees=1, max_depth=5, max_features_fraction=1.0, bootstrap=False
        )
        m1 = train_random_forest(X, y, params, seed=2)
        X2 = np.vstack([X, X])
        y2 = np.concatenate([y, y])
        m2 = train_random_forest(X2, y2, params, seed=2)
        assert np.allclose(m1.predict_proba(X), m2.predict_proba(X), atol=1e-12)

    def test_xor_auroc(self):
        X, y = xor_data(200, seed=3)
        Xt, yt = xor_data(400, seed=4)
        model = train_random_forest(
            X, y, RandomForestParams(n_trees=100, max_depth=8), seed=5
        )
        assert auroc(model.predict_proba(Xt), yt) > 0.9

    def test_determinism(self):
        X, y = xor_data(80, seed=6)
        params = RandomForestParams(n_trees=10, max_depth=5, max_features_fraction=0.5)
        a = train_random_forest(X, y, params, seed=7).predict_proba(X)
        b = train_random_forest(X, y, params, seed=7).predict_proba(X)
        assert np.array_equal(a, b)
        c = train_random_forest(X, y, params, seed=8).predict_proba(X)
        assert not np.array_equal(a, c)

    def test_probability_clipping(self):
        X, y = xor_data(60, seed=9)
        model = train_random_forest(
            X, y, RandomForestParams(n_trees=3, max_depth=8), seed=0
        )
        probs = model.predict_proba(X)
        assert probs.min() >= 1e-6
        assert probs.max() <= 1 - 1e-6

    def test_serialization_roundtrip(self, tmp_path):
        from tabembed.learners import load_model, save_model

        X, y = xor_data(60, seed=10)
        model = train_random_forest(
            X, y, RandomForestParams(n_trees=5, max_depth=4), seed=1
        )
        save_model(model, tmp_path / "rf.json")
        again = load_model(tmp_path / "rf.json")
        assert np.array_equal(model.predict_proba(X), again.predict_proba(X))
