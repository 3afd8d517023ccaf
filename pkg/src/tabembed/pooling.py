"""Pool token-embedding matrices into fixed vectors and assemble
embedding feature matrices for the classifiers."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .backends import Backend, TokenEmbeddingMatrix, prompt_hash
from .cache import EmbeddingCache
from .errors import ConfigError, EmptyMatrix, PartialBatch, TabembedError
from .matrix import FeatureMatrix
from .serializer import PromptConfig, SerializationConfig, assemble_prompt, serialize
from .tabular import RecordSet

POOLING_KINDS = ("max", "mean", "last-token", "first-token")


@dataclass(frozen=True)
class PoolingStrategy:
    kind: str = "max"

    def __post_init__(self):
        if self.kind not in POOLING_KINDS:
            raise ConfigError(f"unknown pooling kind {self.kind!r}")


def pool(matrix, strategy: PoolingStrategy) -> np.ndarray:
    """Reduce a (T, D) token matrix to one D-vector.

    max/mean reduce per dimension over tokens; last-token/first-token
    select row T-1 / row 0.  All four agree when T == 1.
    """
    values = matrix.values if isinstance(matrix, TokenEmbeddingMatrix) else np.asarray(matrix)
    if values.ndim != 2 or values.shape[0] < 1:
        raise EmptyMatrix(f"cannot pool matrix of shape {values.shape}")
    if strategy.kind == "max":
        return values.max(axis=0)
    if strategy.kind == "mean":
        return values.mean(axis=0)
    if strategy.kind == "last-token":
        return values[-1].copy()
    return values[0].copy()


def record_bundle(recordset: RecordSet, record_id: str, scfg, pcfg):
    text = serialize(recordset.record(record_id), recordset.schema, scfg)
    return assemble_prompt(
        text, pcfg, format=scfg.format, source_record_id=record_id
    )


def build_feature_matrix(
    recordset: RecordSet,
    scfg: SerializationConfig,
    pcfg: PromptConfig,
    backend: Backend,
    strategy: PoolingStrategy,
    cache: Optional[EmbeddingCache] = None,
    record_ids=None,
    jobs: int = 1,
) -> FeatureMatrix:
    """One pooled D-dim row per record, in RecordSet order.

    The cache is consulted before any backend call; fetches may run on
    `jobs` threads but output ordering is fixed by record id, so results
    are independent of scheduling.  On failure raises PartialBatch with
    the completed count (cached entries stay cached).
    """
    if record_ids is None:
        record_ids = recordset.ids
    fingerprint = backend.descriptor.fingerprint()
    dim = backend.descriptor.embedding_dim

    def fetch(record_id: str) -> np.ndarray:
        bundle = record_bundle(recordset, record_id, scfg, pcfg)
        ph = prompt_hash(bundle.rendered_text)
        if cache is not None:
            hit = cache.get(ph, fingerprint)
            if hit is not None:
                return pool(hit, strategy)
        emb = backend.embed_tokens(bundle)
        if emb.dim != dim:
            raise ConfigError(
                f"backend returned dim {emb.dim}, descriptor says {dim}"
            )
        if cache is not None:
            cache.put(ph, fingerprint, emb.values)
        return pool(emb, strategy)

    rows = {}
    if jobs <= 1:
        for i, rid in enumerate(record_ids):
            try:
                rows[rid] = fetch(rid)
            except TabembedError as e:
                raise PartialBatch(completed=i, total=len(record_ids), cause=e)
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool_ex:
            futures = {rid: pool_ex.submit(fetch, rid) for rid in record_ids}
            failure = None
            for rid in record_ids:
                try:
                    rows[rid] = futures[rid].result()
                except TabembedError as e:
                    failure = e
                    break
            if failure is not None:
                raise PartialBatch(
                    completed=len(rows), total=len(record_ids), cause=failure
                )

    values = np.vstack([rows[rid] for rid in record_ids])
    return FeatureMatrix(
        rows=tuple(record_ids),
        columns=tuple(f"emb_{j:04d}" for j in range(values.shape[1])),
        values=values,
        missing_mask=np.zeros(values.shape, dtype=bool),
    )
