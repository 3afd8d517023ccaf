import math

import numpy as np
import pytest

from tabembed.backends import (
    BackendDescriptor,
    FixtureBackend,
    MockInformativeBackend,
    RandomBackend,
    TokenEmbeddingMatrix,
    TokenLogprobs,
    make_backend,
)
from tabembed.errors import BackendProtocolError, CandidateMissing, ConfigError, NonFiniteValues
from tabembed.pooling import PoolingStrategy, pool, record_bundle
from tabembed.schema import clinical_deterioration_schema
from tabembed.serializer import PromptConfig, SerializationConfig, serialize
from tabembed.tabular import Record

SCHEMA = clinical_deterioration_schema()
SCFG = SerializationConfig()


def bundle_for(static, record_id="p"):
    from tabembed.serializer import assemble_prompt

    rec = Record(id=record_id, static_values=static, series_values={})
    return assemble_prompt(
        serialize(rec, SCHEMA, SCFG), PromptConfig(), source_record_id=record_id
    )


class TestDescriptor:
    def test_http_requires_endpoint(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(kind="http")

    def test_positive_dim(self):
        with pytest.raises(ConfigError):
            BackendDescriptor(kind="random", embedding_dim=0)

    def test_fingerprint_changes_with_fields(self):
        a = BackendDescriptor(kind="random", embedding_dim=8, seed=1)
        b = BackendDescriptor(kind="random", embedding_dim=8, seed=2)
        c = BackendDescriptor(kind="random", embedding_dim=16, seed=1)
        assert len({a.fingerprint(), b.fingerprint(), c.fingerprint()}) == 3


class TestTypes:
    def test_embedding_matrix_requires_rows(self):
        with pytest.raises(BackendProtocolError):
            TokenEmbeddingMatrix(values=np.zeros((0, 4)), prompt_hash="x")

    def test_embedding_matrix_rejects_nan(self):
        with pytest.raises(NonFiniteValues):
            TokenEmbeddingMatrix(values=np.array([[np.nan, 0.0]]), prompt_hash="x")

    def test_logprobs_must_be_nonpositive(self):
        with pytest.raises(BackendProtocolError):
            TokenLogprobs(tokens=((1, 0.5),), candidates={})
        with pytest.raises(BackendProtocolError):
            TokenLogprobs(tokens=(), candidates={65: 0.2})


class TestMockInformative:
    def make(self, dim=32, seed=11):
        return make_backend(
            BackendDescriptor(kind="mock-informative", embedding_dim=dim, seed=seed),
            SCHEMA,
            SCFG,
        )

    def test_deterministic(self):
        backend = self.make()
        b = bundle_for({"age": 70.0, "sodium": 140.0})
        m1 = backend.embed_tokens(b)
        m2 = backend.embed_tokens(b)
        assert np.array_equal(m1.values, m2.values)
        assert m1.dim == 32

    def test_monotone_locality_sweep(self):
        # growing delta on one feature monotonically lowers cosine similarity
        backend = self.make(dim=64)
        base = {"age": 60.0, "sodium": 140.0, "serum_glucose": 120.0}
        ref = pool(backend.embed_tokens(bundle_for(base)), PoolingStrategy("mean"))

        def cosine(delta):
            values = dict(base, serum_glucose=120.0 + delta)
            v = pool(backend.embed_tokens(bundle_for(values)), PoolingStrategy("mean"))
            return float(v @ ref / (np.linalg.norm(v) * np.linalg.norm(ref)))

        sims = [cosine(d) for d in (60.0, 160.0, 260.0, 360.0)]
        assert all(b < a for a, b in zip(sims, sims[1:])), sims

    def test_similar_records_nearby(self):
        backend = self.make(dim=64)
        a = pool(backend.embed_tokens(bundle_for({"age": 60.0, "sodium": 140.0})),
                 PoolingStrategy("mean"))
        near = pool(backend.embed_tokens(bundle_for({"age": 61.0, "sodium": 140.0})),
                    PoolingStrategy("mean"))
        far = pool(backend.embed_tokens(bundle_for({"age": 95.0, "sodium": 170.0})),
                   PoolingStrategy("mean"))
        def cos(u, v):
            return u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
        assert cos(a, near) > cos(a, far)

    def test_requires_schema(self):
        with pytest.raises(ConfigError):
            make_backend(BackendDescriptor(kind="mock-informative", embedding_dim=8))


class TestRandomBackend:
    def test_single_row_and_content_independence_stats(self):
        backend = make_backend(BackendDescriptor(kind="random", embedding_dim=256, seed=5))
        m1 = backend.embed_tokens(bundle_for({"age": 50.0}, "a"))
        m2 = backend.embed_tokens(bundle_for({"age": 90.0, "sodium": 160.0}, "b"))
        assert m1.token_count == 1 and m2.token_count == 1
        assert not np.array_equal(m1.values, m2.values)
        # same distribution: standard normal rows
        for m in (m1, m2):
            assert abs(m.values.mean()) < 0.3
            assert abs(m.values.std() - 1.0) < 0.3

    def test_seed_changes_vectors(self):
        b = bundle_for({"age": 50.0})
        m1 = make_backend(BackendDescriptor(kind="random", embedding_dim=16, seed=1)).embed_tokens(b)
        m2 = make_backend(BackendDescriptor(kind="random", embedding_dim=16, seed=2)).embed_tokens(b)
        assert not np.array_equal(m1.values, m2.values)


class TestFixtureBackend:
    def test_candidate_logprobs(self):
        backend = FixtureBackend(candidate_logprobs={65: math.log(0.2), 66: math.log(0.3)})
        res = backend.continuation_logprobs("text", "", candidates=[65, 66])
        assert res.candidates[65] == math.log(0.2)
        assert res.candidates[66] == math.log(0.3)

    def test_missing_candidate(self):
        backend = FixtureBackend(candidate_logprobs={65: -1.0})
        with pytest.raises(CandidateMissing):
            backend.continuation_logprobs("text", "", candidates=[65, 66])

    def test_token_logprob_map(self):
        backend = FixtureBackend(token_logprobs={"A": math.log(0.9), "B": math.log(0.1)})
        res = backend.continuation_logprobs("text", "A B")
        assert res.total == pytest.approx(math.log(0.09))


class TestLengthWarning:
    def test_overflow_warns_and_proceeds(self):
        backend = make_backend(
            BackendDescriptor(kind="random", embedding_dim=8, seed=0, max_input_tokens=2)
        )
        b = bundle_for({"age": 70.0, "sodium": 140.0})
        with pytest.warns(UserWarning, match="max_input_tokens"):
            m = backend.embed_tokens(b)
        assert m.token_count == 1
