"""Probability-based model outputs: renormalized two-option probability,
answer-sequence log-likelihood, perplexity ranking, self-consistency
multiple-choice exact match, and direct Yes/No decoding.

Conventions: the two binary answer candidates default to the code points
of "A" and "B"; a tie at p_yes = 0.5 decodes Yes (documented for
reproducibility).
"""

from __future__ import annotations

import itertools
import json
import math
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .backends import Backend
from .errors import ConfigError, EmptyOptions
from .serializer import PromptBundle

DEFAULT_CANDIDATE_IDS = (ord("A"), ord("B"))  # A = Yes, B = No


@dataclass(frozen=True)
class BinaryScore:
    p_yes: float
    raw_logprob_a: float
    raw_logprob_b: float

    def to_dict(self) -> dict:
        return {
            "p_yes": self.p_yes,
            "raw_logprob_a": self.raw_logprob_a,
            "raw_logprob_b": self.raw_logprob_b,
        }


def renormalized_p_yes(raw_logprob_a: float, raw_logprob_b: float) -> float:
    """exp(lp_a) / (exp(lp_a) + exp(lp_b)), max-subtracted so raw
    logprobs far below zero cannot underflow the ratio."""
    m = max(raw_logprob_a, raw_logprob_b)
    ea = math.exp(raw_logprob_a - m)
    eb = math.exp(raw_logprob_b - m)
    return ea / (ea + eb)


def ab_probability(
    bundle: PromptBundle,
    backend: Backend,
    candidate_ids=DEFAULT_CANDIDATE_IDS,
) -> BinaryScore:
    """Probability mass on the Yes option among the two answer tokens only,
    ignoring the rest of the vocabulary."""
    if bundle.question_kind != "binary":
        raise ConfigError("ab_probability requires a binary-question bundle")
    res = backend.continuation_logprobs(bundle, "", candidates=list(candidate_ids))
    lp_a = res.candidates[int(candidate_ids[0])]
    lp_b = res.candidates[int(candidate_ids[1])]
    return BinaryScore(
        p_yes=renormalized_p_yes(lp_a, lp_b),
        raw_logprob_a=lp_a,
        raw_logprob_b=lp_b,
    )


def sequence_loglik(bundle, answer: str, backend: Backend) -> float:
    """Sum of conditional token log-probabilities of `answer` given the
    prompt; `bundle` may be a PromptBundle or plain text."""
    if not answer:
        raise ConfigError("answer must be nonempty")
    res = backend.continuation_logprobs(bundle, answer)
    return res.total


def perplexity(text: str, backend: Backend) -> float:
    """exp of mean negative token log-probability of `text`."""
    if not text:
        raise ConfigError("text must be nonempty")
    res = backend.continuation_logprobs("", text)
    lps = [lp for _, lp in res.tokens]
    if not lps:
        raise ConfigError("backend returned no token logprobs")
    return math.exp(-float(np.mean(lps)))


def rank_paraphrases(texts, backend: Backend):
    """Order candidate paraphrases by ascending perplexity (most coherent
    first); returns (text, perplexity) pairs."""
    scored = [(t, perplexity(t, backend)) for t in texts]
    return sorted(scored, key=lambda pair: pair[1])


@dataclass(frozen=True)
class McqaResult:
    per_shuffle_predictions: tuple  # one frozenset of option strings per shuffle
    exact_match_mean: float
    n_shuffles: int

    def to_dict(self) -> dict:
        return {
            "per_shuffle_predictions": [sorted(p) for p in self.per_shuffle_predictions],
            "exact_match_mean": self.exact_match_mean,
            "n_shuffles": self.n_shuffles,
        }


def _letters(n: int):
    alphabet = string.ascii_uppercase
    if n > len(alphabet):
        raise ConfigError(f"too many options ({n}) to letter")
    return alphabet[:n]


def mcqa_self_consistency(
    bundle,
    options,
    true_set,
    n_shuffles: int,
    seed: int,
    backend: Backend,
) -> McqaResult:
    """Average exact match over option-order shuffles.

    Each shuffle renders the options as lettered choices; the prediction
    is the size-|true_set| letter combination whose rendered answer the
    backend assigns the highest joint likelihood (ties keep the first
    combination in lexicographic order).
    """
    options = list(options)
    true_set = set(true_set)
    if not options:
        raise EmptyOptions("option pool is empty")
    if not true_set or not true_set.issubset(options):
        raise ConfigError("true_set must be a nonempty subset of options")
    if n_shuffles < 1:
        raise ConfigError("n_shuffles must be >= 1")

    base = bundle.rendered_text if isinstance(bundle, PromptBundle) else bundle
    k = len(true_set)
    letters = _letters(len(options))
    predictions = []
    hits = 0
    for s in range(n_shuffles):
        rng = np.random.default_rng([seed, s])
        order = rng.permutation(len(options))
        lines = [f"{letters[i]}. {options[order[i]]}" for i in range(len(options))]
        prompt = base + "\n\nOptions:\n" + "\n".join(lines) + "\nAnswer:"
        best_ll = -math.inf
        best_combo = None
        for combo in itertools.combinations(range(len(options)), k):
            answer = ", ".join(letters[i] for i in combo)
            ll = sequence_loglik(prompt, answer, backend)
            if ll > best_ll:
                best_ll = ll
                best_combo = combo
        predicted = frozenset(options[order[i]] for i in best_combo)
        predictions.append(predicted)
        hits += int(predicted == true_set)
    return McqaResult(
        per_shuffle_predictions=tuple(predictions),
        exact_match_mean=hits / n_shuffles,
        n_shuffles=n_shuffles,
    )


def direct_answer(
    bundle: PromptBundle,
    backend: Backend,
    candidate_ids=DEFAULT_CANDIDATE_IDS,
) -> str:
    """Deterministic decode proxy: Yes iff p_yes >= 0.5 (tie decodes Yes)."""
    score = ab_probability(bundle, backend, candidate_ids)
    return "Yes" if score.p_yes >= 0.5 else "No"


# --------------------------------------------------------------------------
# score files: JSON lines, one object per record


def write_scores_jsonl(path, rows) -> None:
    """rows: iterables of dicts with id, task, method, score, components."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_scores_jsonl(path) -> list:
    out = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
