"""Dense feature matrices: raw-feature preparation and file exports.

Time-series features are reduced to six summary columns (first, last,
min, max, mean, count).  Imputation statistics always come from the
training fold; test matrices must receive the training stats explicitly.
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, EmptyFeatureColumn, ConfigError
from .schema import FeatureSchema
from .tabular import RecordSet

SERIES_STATS = ("first", "last", "min", "max", "mean", "count")

_BINARY_MAGIC = b"TEFM"


@dataclass(frozen=True)
class FeatureMatrix:
    rows: tuple  # record ids, in order
    columns: tuple  # column names, in order
    values: np.ndarray  # float64, shape (len(rows), len(columns))
    missing_mask: np.ndarray  # bool, same shape; True where imputed

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.values.shape != (len(self.rows), len(self.columns)):
            raise DimensionMismatch(
                f"values shape {self.values.shape} != "
                f"({len(self.rows)}, {len(self.columns)})"
            )
        if self.missing_mask.shape != self.values.shape:
            raise DimensionMismatch("missing_mask shape mismatch")
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("feature matrix contains non-finite values")

    @property
    def shape(self):
        return self.values.shape

    def save_binary(self, path: str | Path) -> None:
        """Columnar binary export: magic, dim, row count, little-endian f32."""
        values32 = self.values.astype("<f4")
        with Path(path).open("wb") as fh:
            fh.write(_BINARY_MAGIC)
            fh.write(struct.pack("<II", self.values.shape[1], self.values.shape[0]))
            fh.write(values32.tobytes(order="C"))

    @staticmethod
    def load_binary(path: str | Path) -> np.ndarray:
        raw = Path(path).read_bytes()
        if raw[:4] != _BINARY_MAGIC:
            raise ConfigError(f"{path}: bad magic bytes")
        dim, rows = struct.unpack("<II", raw[4:12])
        data = np.frombuffer(raw[12:], dtype="<f4")
        if data.size != rows * dim:
            raise ConfigError(f"{path}: truncated payload")
        return data.reshape(rows, dim).astype(np.float64)

    def save_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", *self.columns])
            for rid, row in zip(self.rows, self.values):
                writer.writerow([rid, *(format(v, ".17g") for v in row)])

    def content_hash(self) -> str:
        h = zlib.crc32(repr(self.columns).encode())
        h = zlib.crc32(self.values.tobytes(), h)
        h = zlib.crc32(self.missing_mask.tobytes(), h)
        return f"{h:08x}"


@dataclass(frozen=True)
class Imputation:
    kind: str  # "mean-from-train" | "constant"
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in ("mean-from-train", "constant"):
            raise ConfigError(f"unknown imputation kind {self.kind!r}")


@dataclass(frozen=True)
class RawStats:
    """Training-fold statistics: per-column means and categorical vocabularies."""

    column_means: dict  # column name -> float (may be nan when unobserved)
    categories: dict  # categorical feature name -> sorted list of categories


def matrix_columns(schema: FeatureSchema, stats: RawStats) -> list:
    cols = []
    for fdef in schema:
        if fdef.kind == "static-numeric":
            cols.append(fdef.name)
        elif fdef.kind == "static-categorical":
            cols.extend(f"{fdef.name}={c}" for c in stats.categories.get(fdef.name, []))
        else:
            cols.extend(f"{fdef.name}_{s}" for s in SERIES_STATS)
    return cols


def _series_summary(pairs) -> dict:
    values = np.array([v for _, v in pairs], dtype=np.float64)
    return {
        "first": values[0],
        "last": values[-1],
        "min": values.min(),
        "max": values.max(),
        "mean": float(np.sort(values).mean()),
        "count": float(len(values)),
    }


def _sorted_mean(values) -> float:
    # sort before summing so the mean is invariant to record order
    if not values:
        return float("nan")
    return float(np.sort(np.asarray(values, dtype=np.float64)).mean())


def fit_raw_stats(recordset: RecordSet, record_ids=None) -> RawStats:
    """Compute imputation means and categorical vocabularies from training records."""
    ids = set(record_ids) if record_ids is not None else None
    records = [r for r in recordset.records if ids is None or r.id in ids]

    means: dict[str, float] = {}
    categories: dict[str, list] = {}
    for fdef in recordset.schema:
        if fdef.kind == "static-numeric":
            observed = [r.static_values[fdef.name] for r in records if fdef.name in r.static_values]
            means[fdef.name] = _sorted_mean(observed)
        elif fdef.kind == "static-categorical":
            cats = sorted(
                {str(r.static_values[fdef.name]) for r in records if fdef.name in r.static_values}
            )
            categories[fdef.name] = cats
        else:
            summaries = [
                _series_summary(r.series_values[fdef.name])
                for r in records
                if fdef.name in r.series_values
            ]
            for s in SERIES_STATS:
                means[f"{fdef.name}_{s}"] = _sorted_mean([d[s] for d in summaries])
    return RawStats(column_means=means, categories=categories)


def prepare_raw_matrix(
    recordset: RecordSet,
    imputation: Imputation,
    train_fold_stats: Optional[RawStats] = None,
    record_ids=None,
) -> FeatureMatrix:
    """Materialize records into a dense numeric matrix.

    When `imputation.kind` is mean-from-train and no stats are supplied,
    stats are fit from the selected records themselves (the training
    split building its own matrix).  A test split must pass the training
    stats so no test-fold information leaks into imputation.
    """
    if record_ids is None:
        record_ids = recordset.ids
    records = [recordset.record(rid) for rid in record_ids]

    stats = train_fold_stats
    if stats is None:
        if imputation.kind == "mean-from-train":
            stats = fit_raw_stats(recordset, record_ids)
        else:
            stats = fit_raw_stats(recordset, record_ids)  # categories still needed

    cols = matrix_columns(recordset.schema, stats)
    col_idx = {c: j for j, c in enumerate(cols)}
    n, d = len(records), len(cols)
    values = np.zeros((n, d), dtype=np.float64)
    mask = np.zeros((n, d), dtype=bool)

    def impute(column: str) -> float:
        if imputation.kind == "constant":
            return imputation.value
        mean = stats.column_means.get(column, float("nan"))
        if not np.isfinite(mean):
            raise EmptyFeatureColumn(
                f"column {column!r} has no training observations to impute from"
            )
        return mean

    for i, rec in enumerate(records):
        for fdef in recordset.schema:
            if fdef.kind == "static-numeric":
                j = col_idx[fdef.name]
                if fdef.name in rec.static_values:
                    values[i, j] = rec.static_values[fdef.name]
                else:
                    values[i, j] = impute(fdef.name)
                    mask[i, j] = True
            elif fdef.kind == "static-categorical":
                cats = stats.categories.get(fdef.name, [])
                observed = rec.static_values.get(fdef.name)
                if observed is None:
                    # one-hot block stays zero; flagged missing, no mean to impute
                    for c in cats:
                        mask[i, col_idx[f"{fdef.name}={c}"]] = True
                elif str(observed) in cats:
                    values[i, col_idx[f"{fdef.name}={observed}"]] = 1.0
            else:
                pairs = rec.series_values.get(fdef.name)
                if pairs:
                    summary = _series_summary(pairs)
                    for s in SERIES_STATS:
                        values[i, col_idx[f"{fdef.name}_{s}"]] = summary[s]
                else:
                    for s in SERIES_STATS:
                        j = col_idx[f"{fdef.name}_{s}"]
                        if s == "count":
                            values[i, j] = 0.0  # an observed fact, not missing
                        else:
                            values[i, j] = impute(f"{fdef.name}_{s}")
                            mask[i, j] = True

    return FeatureMatrix(rows=tuple(record_ids), columns=tuple(cols), values=values, missing_mask=mask)
