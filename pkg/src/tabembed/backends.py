"""Pluggable token-embedding and log-probability providers.

Three kinds share one interface: a remote HTTP backend speaking the JSON
wire contract, a deterministic informative mock that derives a
label-learnable signal from the numeric values in the prompt, and a
seeded random baseline whose vectors carry no record information.

Wire contract (HTTP kind):
  POST {endpoint}/token_embeddings  {"text": ..., "layer": "last"}
       -> {"dim": D, "tokens": T, "values": [[...]]}
  POST {endpoint}/logprobs  {"text": ..., "continuation": ..., "candidates": [ids]}
       -> {"continuation_logprobs": [...], "candidate_logprobs": {id: lp}}
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import requests

from .errors import (
    BackendProtocolError,
    BackendUnreachable,
    CandidateMissing,
    ConfigError,
    NonFiniteValues,
)
from .schema import FeatureSchema
from .serializer import PromptBundle, SerializationConfig, roundtrip_check

BACKEND_KINDS = ("http", "mock-informative", "random")


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _hash_int(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str
    endpoint: Optional[str] = None
    embedding_dim: int = 64
    max_input_tokens: int = 1042
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in BACKEND_KINDS:
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ConfigError("http backend requires an endpoint")
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")

    def fingerprint(self) -> str:
        return f"{self.kind}|{self.endpoint or ''}|{self.embedding_dim}|{self.seed}"

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "endpoint": self.endpoint,
            "embedding_dim": self.embedding_dim,
            "max_input_tokens": self.max_input_tokens,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackendDescriptor":
        return cls(
            kind=d["kind"],
            endpoint=d.get("endpoint"),
            embedding_dim=d.get("embedding_dim", 64),
            max_input_tokens=d.get("max_input_tokens", 1042),
            seed=d.get("seed"),
        )


@dataclass(frozen=True)
class TokenEmbeddingMatrix:
    values: np.ndarray  # (T, D) float64
    prompt_hash: str

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise BackendProtocolError(
                f"embedding matrix must be (T>=1, D), got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteValues("embedding matrix contains non-finite values")

    @property
    def token_count(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class TokenLogprobs:
    tokens: tuple  # ((token_id, logprob), ...) per continuation position
    candidates: dict  # token_id -> logprob at the final context position

    def __post_init__(self):
        for _, lp in self.tokens:
            if not np.isfinite(lp) or lp > 0:
                raise BackendProtocolError(f"bad token logprob {lp}")
        for lp in self.candidates.values():
            if not np.isfinite(lp) or lp > 0:
                raise BackendProtocolError(f"bad candidate logprob {lp}")

    @property
    def total(self) -> float:
        return float(sum(lp for _, lp in self.tokens))


def _bundle_text(bundle) -> str:
    return bundle.rendered_text if isinstance(bundle, PromptBundle) else bundle


def _mock_tokens(text: str) -> list:
    tokens = text.split()
    return tokens if tokens else [text]


def _token_id(token: str) -> int:
    return _hash_int("tok", token) % (2**31)


class Backend:
    """Shared behavior: call counting and input-length warnings."""

    def __init__(self, descriptor: BackendDescriptor):
        self.descriptor = descriptor
        self.calls = 0  # instrumentation, used by cache tests

    def _check_length(self, bundle) -> None:
        if (
            isinstance(bundle, PromptBundle)
            and bundle.token_estimate > self.descriptor.max_input_tokens
        ):
            warnings.warn(
                f"prompt estimate {bundle.token_estimate} exceeds backend "
                f"max_input_tokens {self.descriptor.max_input_tokens}; "
                "the backend may truncate"
            )

    def embed_tokens(self, bundle) -> TokenEmbeddingMatrix:
        raise NotImplementedError

    def continuation_logprobs(self, bundle, continuation, candidates=()) -> TokenLogprobs:
        raise NotImplementedError


class HttpBackend(Backend):
    def __init__(self, descriptor: BackendDescriptor, timeout: float = 30.0):
        super().__init__(descriptor)
        self.timeout = timeout

    def _post(self, route: str, payload: dict) -> dict:
        url = self.descriptor.endpoint.rstrip("/") + route
        try:
            resp = requests.post(url, json=payload, timeout=self.timeout)
        except requests.RequestException as e:
            raise BackendUnreachable(f"POST {url} failed: {e}") from None
        if resp.status_code != 200:
            raise BackendProtocolError(f"POST {url} -> HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as e:
            raise BackendProtocolError(f"POST {url}: bad JSON: {e}") from None

    def embed_tokens(self, bundle) -> TokenEmbeddingMatrix:
        self._check_length(bundle)
        self.calls += 1
        text = _bundle_text(bundle)
        body = self._post("/token_embeddings", {"text": text, "layer": "last"})
        try:
            dim = int(body["dim"])
            tokens = int(body["tokens"])
            values = np.asarray(body["values"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as e:
            raise BackendProtocolError(f"malformed embedding response: {e}") from None
        if values.ndim != 2 or values.shape != (tokens, dim):
            raise BackendProtocolError(
                f"shape mismatch: header says ({tokens}, {dim}), "
                f"payload is {values.shape}"
            )
        if dim != self.descriptor.embedding_dim:
            raise BackendProtocolError(
                f"server dim {dim} != descriptor dim {self.descriptor.embedding_dim}"
            )
        return TokenEmbeddingMatrix(values=values, prompt_hash=prompt_hash(text))

    def continuation_logprobs(self, bundle, continuation, candidates=()) -> TokenLogprobs:
        self.calls += 1
        text = _bundle_text(bundle)
        body = self._post(
            "/logprobs",
            {
                "text": text,
                "continuation": continuation,
                "candidates": [int(c) for c in candidates],
            },
        )
        try:
            lps = [float(v) for v in body["continuation_logprobs"]]
            cand_raw = body["candidate_logprobs"]
        except (KeyError, TypeError, ValueError) as e:
            raise BackendProtocolError(f"malformed logprob response: {e}") from None
        cand = {}
        for cid in candidates:
            key = str(int(cid))
            if key not in cand_raw:
                raise CandidateMissing(f"candidate {cid} absent from response")
            cand[int(cid)] = float(cand_raw[key])
        token_ids = [_token_id(t) for t in _mock_tokens(continuation)] if continuation else []
        if continuation and len(lps) != len(token_ids):
            # server tokenization wins; pair logprobs with opaque positions
            token_ids = list(range(len(lps)))
        return TokenLogprobs(
            tokens=tuple(zip(token_ids, lps)), candidates=cand
        )


class MockInformativeBackend(Backend):
    """Deterministic embeddings with a label-learnable signal.

    Numeric values are recovered from the prompt through the serializer's
    round-trip grammar, z-scored against the schema's plausible ranges,
    and placed into per-feature seeded random projections; their sum is
    the signal.  Per-token rows add seeded text-hash noise at 10% of the
    signal magnitude, so records with similar values pool to nearby
    vectors.
    """

    def __init__(
        self,
        descriptor: BackendDescriptor,
        schema: FeatureSchema,
        scfg: SerializationConfig,
    ):
        super().__init__(descriptor)
        self.schema = schema
        self.scfg = scfg
        self._seed = descriptor.seed or 0
        self._projections: dict[str, np.ndarray] = {}

    def _projection(self, name: str) -> np.ndarray:
        u = self._projections.get(name)
        if u is None:
            rng = np.random.default_rng([self._seed, _hash_int("proj", name)])
            u = rng.standard_normal(self.descriptor.embedding_dim)
            u /= np.linalg.norm(u)
            self._projections[name] = u
        return u

    def _zscore(self, name: str, value: float) -> float:
        fdef = self.schema.get(name)
        if fdef.plausible_range is None:
            return 0.0
        lo, hi = fdef.plausible_range
        return (value - 0.5 * (lo + hi)) / ((hi - lo) / 4.0)

    def _signal(self, text: str) -> np.ndarray:
        values = roundtrip_check(text, self.scfg, self.schema)
        s = np.zeros(self.descriptor.embedding_dim)
        for name, v in values.items():
            v = float(np.mean(v)) if isinstance(v, list) else float(v)
            s += self._zscore(name, v) * self._projection(name)
        return s

    def embed_tokens(self, bundle) -> TokenEmbeddingMatrix:
        self._check_length(bundle)
        self.calls += 1
        text = _bundle_text(bundle)
        s = self._signal(text)
        scale = float(np.linalg.norm(s))
        if scale == 0.0:
            scale = 1.0
        tokens = _mock_tokens(text)
        rng = np.random.default_rng([self._seed, _hash_int("text", text)])
        noise = rng.standard_normal((len(tokens), self.descriptor.embedding_dim))
        norms = np.linalg.norm(noise, axis=1, keepdims=True)
        rows = s + noise * (0.1 * scale / norms)
        return TokenEmbeddingMatrix(values=rows, prompt_hash=prompt_hash(text))

    def continuation_logprobs(self, bundle, continuation, candidates=()) -> TokenLogprobs:
        self.calls += 1
        text = _bundle_text(bundle)
        tokens = []
        prefix = text
        for tok in _mock_tokens(continuation) if continuation else []:
            u = (_hash_int("lp", prefix, tok) % 10**9) / 10**9
            tokens.append((_token_id(tok), -(0.05 + 2.95 * u)))
            prefix = prefix + " " + tok
        cand = {}
        for cid in candidates:
            u = (_hash_int("cand", text, str(int(cid))) % 10**9) / 10**9
            cand[int(cid)] = -(0.05 + 2.95 * u)
        return TokenLogprobs(tokens=tuple(tokens), candidates=cand)


class RandomBackend(Backend):
    """Seeded random baseline: one D-dim row per prompt, independent of
    record content (the draw is keyed by a cryptographic text hash, so no
    record information survives into the vector)."""

    def embed_tokens(self, bundle) -> TokenEmbeddingMatrix:
        self._check_length(bundle)
        self.calls += 1
        text = _bundle_text(bundle)
        rng = np.random.default_rng(
            [self.descriptor.seed or 0, _hash_int("rand", text)]
        )
        row = rng.standard_normal((1, self.descriptor.embedding_dim))
        return TokenEmbeddingMatrix(values=row, prompt_hash=prompt_hash(text))

    def continuation_logprobs(self, bundle, continuation, candidates=()) -> TokenLogprobs:
        self.calls += 1
        text = _bundle_text(bundle)
        seed = self.descriptor.seed or 0
        tokens = []
        for i, tok in enumerate(_mock_tokens(continuation) if continuation else []):
            u = (_hash_int("rlp", str(seed), text, continuation, str(i)) % 10**9) / 10**9
            tokens.append((_token_id(tok), -(0.05 + 4.95 * u)))
        cand = {}
        for cid in candidates:
            u = (_hash_int("rcand", str(seed), text, str(int(cid))) % 10**9) / 10**9
            cand[int(cid)] = -(0.05 + 4.95 * u)
        return TokenLogprobs(tokens=tuple(tokens), candidates=cand)


class FixtureBackend(Backend):
    """Scripted backend for tests: fixed candidate logprobs and fixed
    per-token continuation logprobs."""

    def __init__(
        self,
        descriptor: Optional[BackendDescriptor] = None,
        candidate_logprobs: Optional[dict] = None,
        continuation_logprob_seq: Optional[list] = None,
        token_logprobs: Optional[dict] = None,
        embedding: Optional[np.ndarray] = None,
    ):
        super().__init__(
            descriptor or BackendDescriptor(kind="random", embedding_dim=4, seed=0)
        )
        self.candidate_logprobs = dict(candidate_logprobs or {})
        self.continuation_logprob_seq = list(continuation_logprob_seq or [])
        self.token_logprobs = dict(token_logprobs or {})  # fixed conditionals
        self.embedding = embedding

    def embed_tokens(self, bundle) -> TokenEmbeddingMatrix:
        self.calls += 1
        text = _bundle_text(bundle)
        if self.embedding is None:
            raise ConfigError("fixture backend has no embedding configured")
        return TokenEmbeddingMatrix(
            values=np.asarray(self.embedding, dtype=np.float64),
            prompt_hash=prompt_hash(text),
        )

    def continuation_logprobs(self, bundle, continuation, candidates=()) -> TokenLogprobs:
        self.calls += 1
        toks = _mock_tokens(continuation) if continuation else []
        if self.token_logprobs:
            lps = [self.token_logprobs.get(t, np.log(0.5)) for t in toks]
        else:
            lps = self.continuation_logprob_seq[: len(toks)]
            if len(lps) < len(toks):
                lps = lps + [np.log(0.5)] * (len(toks) - len(lps))
        cand = {}
        for cid in candidates:
            if int(cid) not in self.candidate_logprobs:
                raise CandidateMissing(f"candidate {cid} not scripted")
            cand[int(cid)] = self.candidate_logprobs[int(cid)]
        return TokenLogprobs(
            tokens=tuple((_token_id(t), lp) for t, lp in zip(toks, lps)),
            candidates=cand,
        )


def make_backend(
    descriptor: BackendDescriptor,
    schema: Optional[FeatureSchema] = None,
    scfg: Optional[SerializationConfig] = None,
) -> Backend:
    if descriptor.kind == "http":
        return HttpBackend(descriptor)
    if descriptor.kind == "mock-informative":
        if schema is None or scfg is None:
            raise ConfigError(
                "mock-informative backend needs the schema and serialization config"
            )
        return MockInformativeBackend(descriptor, schema, scfg)
    return RandomBackend(descriptor)
