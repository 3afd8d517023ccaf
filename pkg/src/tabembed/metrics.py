"""Statistical evaluation: AUROC, bootstrap CIs, calibration, correlations.

AUROC uses the Mann-Whitney formulation with half credit for ties.
Bootstrap intervals are percentile intervals over seeded resamples with
per-resample seeds spawned from the master seed, so results do not
depend on evaluation order.  Correlation p-values use the Student-t
transform; an exact permutation test is available for small n.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
from scipy import stats as sps

from .errors import (
    ConfigError,
    ConstantInput,
    LengthMismatch,
    SingleClass,
    TooFewValidResamples,
)


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def average_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(scores, labels) -> float:
    """(#concordant pairs + 0.5 #tied pairs) / (n_pos * n_neg)."""
    scores, labels = _check_pair(scores, labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("both classes must be present")
    ranks = average_ranks(scores)
    rank_sum = ranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class MetricCI:
    point: float
    lo: float
    hi: float
    level: float
    n_resamples: int
    seed: int
    n_skipped: int = 0
    degenerate: bool = False  # point fell outside the percentile bounds

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "lo": self.lo,
            "hi": self.hi,
            "level": self.level,
            "n_resamples": self.n_resamples,
            "seed": self.seed,
            "n_skipped": self.n_skipped,
            "degenerate": self.degenerate,
        }


def bootstrap_ci(
    statistic: Callable,
    scores,
    labels,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> MetricCI:
    """Percentile bootstrap interval for a score/label statistic.

    Resamples drawing a single class are redrawn up to 10 times, then
    skipped; more than 50% skipped raises TooFewValidResamples.
    """
    if n_resamples < 100:
        raise ConfigError("n_resamples must be at least 100")
    scores, labels = _check_pair(scores, labels)
    n = len(scores)
    point = float(statistic(scores, labels))

    children = np.random.SeedSequence(seed).spawn(n_resamples)
    values = []
    skipped = 0
    for child in children:
        rng = np.random.default_rng(child)
        ok = False
        for _ in range(10):
            idx = rng.integers(0, n, n)
            lab = labels[idx]
            if lab.min() != lab.max():
                values.append(float(statistic(scores[idx], lab)))
                ok = True
                break
        if not ok:
            skipped += 1
    if skipped > n_resamples / 2:
        raise TooFewValidResamples(
            f"{skipped}/{n_resamples} resamples drew a single class"
        )

    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(np.asarray(values), [alpha, 1.0 - alpha])
    return MetricCI(
        point=point,
        lo=float(lo),
        hi=float(hi),
        level=level,
        n_resamples=n_resamples,
        seed=seed,
        n_skipped=skipped,
        degenerate=not (lo <= point <= hi),
    )


@dataclass(frozen=True)
class CalibrationCurve:
    bin_edges: tuple  # n_bins + 1 ascending edges over [0, 1]
    mean_predicted: tuple  # nan for empty bins
    observed_rate: tuple  # nan for empty bins
    counts: tuple

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    def occupied(self):
        """(mean_predicted, observed_rate, count) rows for nonempty bins."""
        return [
            (self.mean_predicted[i], self.observed_rate[i], self.counts[i])
            for i in range(self.n_bins)
            if self.counts[i] > 0
        ]

    def to_dict(self) -> dict:
        def clean(xs):
            return [None if isinstance(x, float) and np.isnan(x) else x for x in xs]

        return {
            "bin_edges": list(self.bin_edges),
            "mean_predicted": clean(self.mean_predicted),
            "observed_rate": clean(self.observed_rate),
            "counts": list(self.counts),
        }

    def plot_rows(self):
        """(bin_mid, predicted, observed, count) rows for CSV export."""
        rows = []
        for i in range(self.n_bins):
            mid = 0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
            rows.append(
                (mid, self.mean_predicted[i], self.observed_rate[i], self.counts[i])
            )
        return rows


def calibration_curve(probs, labels, n_bins: int = 10) -> CalibrationCurve:
    """Uniform-width reliability bins over [0, 1]; empty bins emitted with count 0."""
    probs, labels = _check_pair(probs, labels)
    if probs.size and (probs.min() < 0 or probs.max() > 1):
        raise ConfigError("probabilities must lie in [0, 1]")
    if n_bins < 1:
        raise ConfigError("n_bins must be positive")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    idx = np.minimum((probs * n_bins).astype(np.int64), n_bins - 1)
    mean_pred, obs_rate, counts = [], [], []
    for b in range(n_bins):
        sel = idx == b
        c = int(sel.sum())
        counts.append(c)
        if c:
            mean_pred.append(float(probs[sel].mean()))
            obs_rate.append(float(labels[sel].mean()))
        else:
            mean_pred.append(float("nan"))
            obs_rate.append(float("nan"))
    return CalibrationCurve(
        bin_edges=tuple(edges.tolist()),
        mean_predicted=tuple(mean_pred),
        observed_rate=tuple(obs_rate),
        counts=tuple(counts),
    )


@dataclass(frozen=True)
class CorrelationResult:
    coefficient: float
    p_value: float
    method: str
    n: int

    def to_dict(self) -> dict:
        return {
            "coefficient": self.coefficient,
            "p_value": self.p_value,
            "method": self.method,
            "n": self.n,
        }


def _pearson_r(a: np.ndarray, b: np.ndarray) -> float:
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac**2).sum() * (bc**2).sum())
    return float((ac * bc).sum() / denom)


def _t_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * np.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * sps.t.sf(t, df=n - 2))


@lru_cache(maxsize=1)
def _all_permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.int8)


def _permutation_pvalue(a: np.ndarray, b: np.ndarray, r_obs: float) -> float:
    n = len(a)
    if n > 12:
        raise ConfigError("exact permutation test limited to n <= 12")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = np.sqrt((ac**2).sum() * (bc**2).sum())
    threshold = abs(r_obs) - 1e-12
    count = 0
    total = 0
    if n <= 10:
        perm = _all_permutations(n)
        rs = (ac[perm.astype(np.int64)] @ bc) / denom
        return float((np.abs(rs) >= threshold).mean())

    chunk = []

    def flush(chunk):
        nonlocal count, total
        perm = np.asarray(chunk, dtype=np.int64)
        rs = (ac[perm] @ bc) / denom
        count += int((np.abs(rs) >= threshold).sum())
        total += len(chunk)

    for p in itertools.permutations(range(n)):
        chunk.append(p)
        if len(chunk) == 100_000:
            flush(chunk)
            chunk = []
    if chunk:
        flush(chunk)
    return count / total


def pearson(a, b, exact_permutation: bool = False) -> CorrelationResult:
    a, b = _check_pair(a, b)
    n = len(a)
    if n < 3:
        raise ConfigError("need at least 3 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ConstantInput("correlation undefined for constant input")
    r = _pearson_r(a, b)
    p = _permutation_pvalue(a, b, r) if exact_permutation else _t_pvalue(r, n)
    return CorrelationResult(coefficient=r, p_value=p, method="pearson", n=n)


def spearman(a, b, exact_permutation: bool = False) -> CorrelationResult:
    a, b = _check_pair(a, b)
    n = len(a)
    if n < 3:
        raise ConfigError("need at least 3 points")
    if np.all(a == a[0]) or np.all(b == b[0]):
        raise ConstantInput("correlation undefined for constant input")
    ra = average_ranks(a)
    rb = average_ranks(b)
    rho = _pearson_r(ra, rb)
    p = _permutation_pvalue(ra, rb, rho) if exact_permutation else _t_pvalue(rho, n)
    return CorrelationResult(coefficient=rho, p_value=p, method="spearman", n=n)


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn}


def confusion_matrix(pred_labels, labels) -> ConfusionMatrix:
    preds, labels = _check_pair(pred_labels, labels)
    return ConfusionMatrix(
        tp=int(((preds == 1) & (labels == 1)).sum()),
        fp=int(((preds == 1) & (labels == 0)).sum()),
        tn=int(((preds == 0) & (labels == 0)).sum()),
        fn=int(((preds == 0) & (labels == 1)).sum()),
    )


def accuracy(pred_labels, labels) -> float:
    return confusion_matrix(pred_labels, labels).accuracy


def exact_match_mean(results) -> float:
    """Mean of per-input exact-match means over a list of McqaResult-likes."""
    values = [r.exact_match_mean for r in results]
    if not values:
        raise ConfigError("no results to average")
    return float(np.mean(values))
