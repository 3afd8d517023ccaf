"""Exercises the HTTP wire contract against a local in-process server."""

import numpy as np
import pytest

from tabembed.backends import BackendDescriptor, HttpBackend, make_backend
from tabembed.errors import (
    BackendProtocolError,
    BackendUnreachable,
    CandidateMissing,
    NonFiniteValues,
)
from tabembed.serializer import PromptConfig, assemble_prompt


def http_backend(server, dim=8):
    return make_backend(
        BackendDescriptor(kind="http", endpoint=server.endpoint, embedding_dim=dim)
    )


def bundle(text="some patient record text"):
    return assemble_prompt(text, PromptConfig(), source_record_id="p")


class TestTokenEmbeddings:
    def test_matrix_returned_verbatim(self, model_server):
        backend = http_backend(model_server)
        b = bundle("one two three")
        m1 = backend.embed_tokens(b)
        m2 = backend.embed_tokens(b)
        # server is deterministic per text; the client must not transform values
        assert np.array_equal(m1.values, m2.values)
        # prompt is tokenized by the server: words + question words
        assert m1.dim == 8
        assert m1.token_count == len(b.rendered_text.split())

    def test_shape_mismatch_raises_protocol_error(self, model_server):
        model_server.mode = "shape-mismatch"
        backend = http_backend(model_server)
        with pytest.raises(BackendProtocolError):
            backend.embed_tokens(bundle())

    def test_non_finite_values_rejected(self, model_server):
        model_server.mode = "non-finite"
        backend = http_backend(model_server)
        with pytest.raises(NonFiniteValues):
            backend.embed_tokens(bundle())

    def test_dim_mismatch_rejected(self, model_server):
        backend = http_backend(model_server, dim=16)  # server emits 8
        with pytest.raises(BackendProtocolError):
            backend.embed_tokens(bundle())

    def test_unreachable(self):
        backend = HttpBackend(
            BackendDescriptor(kind="http", endpoint="http://127.0.0.1:9", embedding_dim=8),
            timeout=0.5,
        )
        with pytest.raises(BackendUnreachable):
            backend.embed_tokens(bundle())


class TestLogprobs:
    def test_continuation_and_candidates(self, model_server):
        backend = http_backend(model_server)
        res = backend.continuation_logprobs(bundle(), "A. Yes.", candidates=[65, 66])
        assert len(res.tokens) == 2  # "A." and "Yes."
        assert all(lp <= 0 for _, lp in res.tokens)
        assert set(res.candidates) == {65, 66}

    def test_candidate_missing(self, model_server):
        model_server.mode = "missing-candidate"
        backend = http_backend(model_server)
        with pytest.raises(CandidateMissing):
            backend.continuation_logprobs(bundle(), "", candidates=[65, 66])

    def test_call_counter(self, model_server):
        backend = http_backend(model_server)
        backend.embed_tokens(bundle())
        backend.continuation_logprobs(bundle(), "x", candidates=[])
        assert backend.calls == 2
