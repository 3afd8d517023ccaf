import warnings

import numpy as np
import pytest

from tabembed.cache import EmbeddingCache
from tabembed.errors import CacheCorrupt


@pytest.fixture
def cache(tmp_path):
    return EmbeddingCache(tmp_path / "cache")


def matrix(seed=0, shape=(5, 8)):
    return np.random.default_rng(seed).normal(size=shape)


class TestCache:
    def test_put_then_get_byte_identical(self, cache):
        values = matrix()
        cache.put("hash1", "fp1", values)
        hit = cache.get("hash1", "fp1")
        assert hit.tobytes() == values.tobytes()

    def test_cold_miss(self, cache):
        assert cache.get("nope", "fp") is None

    def test_fingerprint_isolation(self, cache):
        cache.put("h", "fp-a", matrix(1))
        assert cache.get("h", "fp-b") is None  # never a stale cross-backend hit

    def test_multiple_entries(self, cache):
        a, b = matrix(1), matrix(2, (3, 4))
        cache.put("h1", "fp", a)
        cache.put("h2", "fp", b)
        assert np.array_equal(cache.get("h1", "fp"), a)
        assert np.array_equal(cache.get("h2", "fp"), b)

    def test_overwrite_returns_latest(self, cache):
        cache.put("h", "fp", matrix(1))
        newer = matrix(2)
        cache.put("h", "fp", newer)
        assert np.array_equal(cache.get("h", "fp"), newer)

    def test_corrupted_entry_is_miss_with_warning(self, cache):
        cache.put("h", "fp", matrix())
        log = cache.log_path
        raw = bytearray(log.read_bytes())
        raw[40] ^= 0xFF
        log.write_bytes(bytes(raw))
        fresh = EmbeddingCache(cache.root)
        with pytest.warns(CacheCorrupt):
            assert fresh.get("h", "fp") is None

    def test_truncated_log_is_miss_not_crash(self, cache):
        cache.put("h", "fp", matrix())
        raw = cache.log_path.read_bytes()
        cache.log_path.write_bytes(raw[: len(raw) // 2])
        fresh = EmbeddingCache(cache.root)
        with pytest.warns(CacheCorrupt):
            assert fresh.get("h", "fp") is None

    def test_second_handle_sees_writes(self, cache):
        values = matrix(3)
        cache.put("h", "fp", values)
        other = EmbeddingCache(cache.root)
        assert np.array_equal(other.get("h", "fp"), values)

    def test_survives_missing_index(self, cache):
        cache.put("h", "fp", matrix())
        cache.index_path.unlink()
        fresh = EmbeddingCache(cache.root)
        assert fresh.get("h", "fp") is None  # index gone -> miss, no crash
