import numpy as np
import pytest

from tabembed.errors import DegenerateLabels, NonConvergence
from tabembed.learners import ElasticNetParams, train_elasticnet_lr
from tabembed.learners.elasticnet import smooth_grad, smooth_loss


def newton_ridge_oracle(Xs, y, alpha, tol=1e-12, iters=200):
    """Damped-Newton solver for mean logloss + alpha/2 ||w||^2 on an
    already-standardized design; intercept unpenalized.  Independent of
    the proximal-gradient path."""
    n, d = Xs.shape
    A = np.hstack([Xs, np.ones((n, 1))])
    theta = np.zeros(d + 1)
    reg = np.concatenate([np.full(d, alpha), [0.0]])
    for _ in range(iters):
        z = A @ theta
        p = 1.0 / (1.0 + np.exp(-z))
        grad = A.T @ (p - y) / n + reg * theta
        W = p * (1 - p)
        H = (A * W[:, None]).T @ A / n + np.diag(reg) + 1e-12 * np.eye(d + 1)
        step = np.linalg.solve(H, grad)
        theta = theta - step
        if np.max(np.abs(step)) < tol:
            break
    return theta[:d], theta[d]


def random_problem(rng, n=None, d=None):
    n = n or int(rng.integers(40, 200))
    d = d or int(rng.integers(2, 20))
    X = rng.normal(size=(n, d)) * rng.uniform(0.5, 3.0, size=d)
    w = rng.normal(size=d) * (rng.random(d) < 0.6)
    logits = (X - X.mean(0)) / np.where(X.std(0) == 0, 1, X.std(0)) @ w
    y = (rng.random(n) < 1 / (1 + np.exp(-logits))).astype(float)
    if y.min() == y.max():
        y[0] = 1 - y[0]
    return X, y


class TestElasticNet:
    def test_full_shrinkage(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(100, 5))
        y = (rng.random(100) < 0.5).astype(int)
        model = train_elasticnet_lr(X, y, ElasticNetParams(alpha=100.0, l1_ratio=1.0))
        assert np.all(model.coef == 0.0)
        base = y.mean()
        assert model.intercept == pytest.approx(np.log(base / (1 - base)), abs=1e-6)

    def test_ridge_matches_newton_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            X, y = random_problem(rng, d=int(rng.integers(2, 8)))
            alpha = float(rng.choice([0.1, 0.5, 1.0]))
            model = train_elasticnet_lr(
                X, y, ElasticNetParams(alpha=alpha, l1_ratio=0.0, tol=1e-10,
                                       max_iters=60_000)
            )
            Xs = (X - model.mean) / model.scale
            w_ref, b_ref = newton_ridge_oracle(Xs, y, alpha)
            assert np.max(np.abs(model.coef - w_ref)) < 1e-6
            assert abs(model.intercept - b_ref) < 1e-6

    def test_subgradient_conditions(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            X, y = random_problem(rng)
            params = ElasticNetParams(
                alpha=float(rng.choice([0.1, 0.5, 1.0])),
                l1_ratio=float(rng.choice([0.1, 0.5, 0.9])),
                tol=1e-10,
                max_iters=100_000,
            )
            model = train_elasticnet_lr(X, y, params)
            assert model.converged
            assert model.optimality_violation(X, y) < 1e-4

    def test_smooth_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        X, y = random_problem(rng, n=60, d=5)
        Xs = (X - X.mean(0)) / X.std(0)
        w = rng.normal(size=5) * 0.5
        b = 0.3
        alpha, l1_ratio = 0.4, 0.6
        gw, gb = smooth_grad(w, b, Xs, y, alpha, l1_ratio)
        eps = 1e-6
        for j in range(5):
            wp, wm = w.copy(), w.copy()
            wp[j] += eps
            wm[j] -= eps
            fd = (
                smooth_loss(wp, b, Xs, y, alpha, l1_ratio)
                - smooth_loss(wm, b, Xs, y, alpha, l1_ratio)
            ) / (2 * eps)
            assert abs(fd - gw[j]) <= 1e-5 * max(1.0, abs(gw[j]))
        fd_b = (
            smooth_loss(w, b + eps, Xs, y, alpha, l1_ratio)
            - smooth_loss(w, b - eps, Xs, y, alpha, l1_ratio)
        ) / (2 * eps)
        assert abs(fd_b - gb) <= 1e-5 * max(1.0, abs(gb))

    def test_separable_data_stays_finite_and_monotone(self):
        X = np.linspace(-2, 2, 30).reshape(-1, 1)
        y = (X[:, 0] > 0).astype(int)
        model = train_elasticnet_lr(X, y, ElasticNetParams(alpha=0.1, l1_ratio=0.5))
        assert np.all(np.isfinite(model.coef))
        probs = model.predict_proba(X)
        assert np.all(np.diff(probs) >= 0)

    def test_non_convergence_warns_and_returns(self):
        rng = np.random.default_rng(4)
        X, y = random_problem(rng, n=100, d=10)
        with pytest.warns(NonConvergence):
            model = train_elasticnet_lr(
                X, y, ElasticNetParams(alpha=0.1, l1_ratio=0.5, tol=1e-14, max_iters=3)
            )
        assert not model.converged
        assert np.all(np.isfinite(model.coef))

    def test_degenerate_labels(self):
        with pytest.raises(DegenerateLabels):
            train_elasticnet_lr(np.zeros((5, 2)), np.ones(5), ElasticNetParams())

    def test_prediction_ranking_invariant_to_affine_rescaling(self):
        rng = np.random.default_rng(5)
        X, y = random_problem(rng, n=80, d=4)
        params = ElasticNetParams(alpha=0.1, l1_ratio=0.5, tol=1e-10, max_iters=100_000)
        m1 = train_elasticnet_lr(X, y, params)
        X2 = X * np.array([2.0, 0.5, 10.0, 1.0]) + np.array([1.0, -3.0, 0.0, 7.0])
        m2 = train_elasticnet_lr(X2, y, params)
        p1 = m1.predict_proba(X)
        p2 = m2.predict_proba(X2)
        assert np.array_equal(np.argsort(p1, kind="stable"), np.argsort(p2, kind="stable"))

    def test_serialization_roundtrip(self, tmp_path):
        from tabembed.learners import load_model, save_model

        rng = np.random.default_rng(6)
        X, y = random_problem(rng, n=60, d=4)
        model = train_elasticnet_lr(X, y, ElasticNetParams(alpha=0.5, l1_ratio=0.5))
        save_model(model, tmp_path / "en.json")
        again = load_model(tmp_path / "en.json")
        assert np.array_equal(model.predict_proba(X), again.predict_proba(X))
