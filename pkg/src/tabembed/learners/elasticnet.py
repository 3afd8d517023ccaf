"""Elastic-net logistic regression by proximal gradient (ISTA).

Objective: mean logistic loss
           + alpha * (l1_ratio * ||w||_1 + (1 - l1_ratio)/2 * ||w||_2^2).

The l1 part is handled by soft-thresholding; the ridge part stays in the
smooth gradient.  Features are standardized internally on training-fold
statistics and the intercept is unpenalized.  Step sizes use backtracking
line search; iteration stops when the parameter-change max-norm drops
below tol.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ConfigError, DimensionMismatch, NonConvergence
from .gbt import check_training_inputs

_PROB_EPS = 1e-12


@dataclass(frozen=True)
class ElasticNetParams:
    alpha: float = 0.1
    l1_ratio: float = 0.5
    tol: float = 1e-8
    max_iters: int = 20000

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if not 0.0 <= self.l1_ratio <= 1.0:
            raise ConfigError("l1_ratio must lie in [0, 1]")
        if self.tol <= 0:
            raise ConfigError("tol must be positive")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "l1_ratio": self.l1_ratio,
            "tol": self.tol,
            "max_iters": self.max_iters,
        }


def smooth_loss(w, b, Xs, y, alpha, l1_ratio):
    """Differentiable part: mean logloss + ridge term (no l1)."""
    margin = Xs @ w + b
    signed = np.where(y == 1, -margin, margin)
    loss = float(np.logaddexp(0.0, signed).mean())
    return loss + 0.5 * alpha * (1.0 - l1_ratio) * float(w @ w)


def smooth_grad(w, b, Xs, y, alpha, l1_ratio):
    p = expit(Xs @ w + b)
    resid = p - y
    gw = Xs.T @ resid / len(y) + alpha * (1.0 - l1_ratio) * w
    gb = float(resid.mean())
    return gw, gb


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


@dataclass
class ElasticNetModel:
    kind = "elasticnet"
    coef: np.ndarray  # in standardized feature space
    intercept: float
    mean: np.ndarray
    scale: np.ndarray
    params: ElasticNetParams
    seed: int
    n_iters: int
    converged: bool
    metadata: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return len(self.coef)

    def _standardize(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"expected {self.n_features} columns, got {X.shape}"
            )
        return (X - self.mean) / self.scale

    def predict_margin(self, X) -> np.ndarray:
        return self._standardize(X) @ self.coef + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return np.clip(expit(self.predict_margin(X)), _PROB_EPS, 1.0 - _PROB_EPS)

    def optimality_violation(self, X, y) -> float:
        """Max subgradient-condition violation at the current iterate.

        For nonzero coefficients |grad_j + alpha*l1_ratio*sign(w_j)| must
        vanish; for zero coefficients |grad_j| <= alpha*l1_ratio.
        """
        Xs = self._standardize(X)
        y = np.asarray(y, dtype=np.float64)
        gw, gb = smooth_grad(
            self.coef, self.intercept, Xs, y, self.params.alpha, self.params.l1_ratio
        )
        t = self.params.alpha * self.params.l1_ratio
        nonzero = self.coef != 0
        viol = np.where(
            nonzero,
            np.abs(gw + t * np.sign(self.coef)),
            np.maximum(np.abs(gw) - t, 0.0),
        )
        return float(max(viol.max() if len(viol) else 0.0, abs(gb)))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "format_version": 1,
            "params": self.params.to_dict(),
            "coef": self.coef.tolist(),
            "intercept": self.intercept,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "seed": self.seed,
            "n_iters": self.n_iters,
            "converged": self.converged,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ElasticNetModel":
        return cls(
            coef=np.asarray(d["coef"], dtype=np.float64),
            intercept=d["intercept"],
            mean=np.asarray(d["mean"], dtype=np.float64),
            scale=np.asarray(d["scale"], dtype=np.float64),
            params=ElasticNetParams(**d["params"]),
            seed=d["seed"],
            n_iters=d["n_iters"],
            converged=d["converged"],
            metadata=dict(d.get("metadata", {})),
        )


def train_elasticnet_lr(
    X, y, params: ElasticNetParams, seed: int = 0, metadata=None
) -> ElasticNetModel:
    X, y = check_training_inputs(X, y)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale == 0.0, 1.0, scale)
    Xs = (X - mean) / scale

    d = X.shape[1]
    w = np.zeros(d)
    b = 0.0
    step = 1.0
    t_l1 = params.alpha * params.l1_ratio

    f = smooth_loss(w, b, Xs, y, params.alpha, params.l1_ratio)
    converged = False
    it = 0
    for it in range(1, params.max_iters + 1):
        gw, gb = smooth_grad(w, b, Xs, y, params.alpha, params.l1_ratio)
        # backtracking: shrink until the quadratic upper bound holds
        while True:
            w_new = soft_threshold(w - step * gw, step * t_l1)
            b_new = b - step * gb
            dw = w_new - w
            db = b_new - b
            f_new = smooth_loss(w_new, b_new, Xs, y, params.alpha, params.l1_ratio)
            bound = (
                f
                + float(gw @ dw)
                + gb * db
                + (float(dw @ dw) + db * db) / (2.0 * step)
            )
            if f_new <= bound + 1e-15 or step < 1e-12:
                break
            step *= 0.5
        delta = max(np.max(np.abs(dw)) if d else 0.0, abs(db))
        w, b, f = w_new, b_new, f_new
        if delta < params.tol:
            converged = True
            break
        step = min(step * 1.5, 1e6)  # let the step grow back between iterations

    if not converged:
        warnings.warn(
            f"proximal gradient hit max_iters={params.max_iters} "
            f"(last step change {delta:.2e}); returning last iterate",
            NonConvergence,
        )

    return ElasticNetModel(
        coef=w,
        intercept=float(b),
        mean=mean,
        scale=scale,
        params=params,
        seed=seed,
        n_iters=it,
        converged=converged,
        metadata=dict(metadata or {}),
    )
