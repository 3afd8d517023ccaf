"""Record collections: CSV ingestion, validation, and k-fold splitting.

CSV wire format: UTF-8, comma-separated, header row required.  The `id`
column is mandatory, label columns are prefixed `label:`, and time-series
cells hold semicolon-separated `t:v` pairs with t in hours.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    DuplicateId,
    MalformedNumber,
    MissingLabel,
    TooFewRecords,
    UnknownColumn,
)
from .schema import FeatureSchema

LABEL_PREFIX = "label:"


@dataclass(frozen=True)
class Record:
    """One row of data.  Missing features are simply absent from the maps."""

    id: str
    static_values: dict  # feature name -> float | str
    series_values: dict  # feature name -> list[(hours, value)]

    def __post_init__(self):
        for name, pairs in self.series_values.items():
            times = [t for t, _ in pairs]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise MalformedNumber(
                    f"record {self.id!r}: series {name!r} must be strictly "
                    "ascending in time"
                )

    def has(self, name: str) -> bool:
        return name in self.static_values or name in self.series_values


@dataclass(frozen=True)
class RecordSet:
    """Immutable collection of records plus binary task labels."""

    schema: FeatureSchema
    records: tuple[Record, ...]
    tasks: dict  # task name -> tuple of 0/1 ints, aligned with records

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            seen, dup = set(), None
            for i in ids:
                if i in seen:
                    dup = i
                    break
                seen.add(i)
            raise DuplicateId(f"duplicate record id {dup!r}")
        clean = {}
        for task, labels in self.tasks.items():
            labels = tuple(int(v) for v in labels)
            if len(labels) != len(self.records):
                raise MissingLabel(
                    f"task {task!r}: {len(labels)} labels for "
                    f"{len(self.records)} records"
                )
            if any(v not in (0, 1) for v in labels):
                raise MissingLabel(f"task {task!r}: labels must be 0 or 1")
            clean[task] = labels
        object.__setattr__(self, "tasks", clean)

    def __len__(self):
        return len(self.records)

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def record(self, record_id: str) -> Record:
        return self._by_id[record_id]

    @property
    def _by_id(self) -> dict:
        # built lazily; frozen dataclass so stash in __dict__ via object.__setattr__
        cached = self.__dict__.get("_by_id_cache")
        if cached is None:
            cached = {r.id: r for r in self.records}
            object.__setattr__(self, "_by_id_cache", cached)
        return cached

    def labels(self, task: str) -> np.ndarray:
        return np.asarray(self.tasks[task], dtype=np.int64)

    def subset(self, record_ids) -> "RecordSet":
        """New RecordSet restricted to `record_ids`, preserving this set's order."""
        keep = set(record_ids)
        idx = [i for i, r in enumerate(self.records) if r.id in keep]
        return RecordSet(
            schema=self.schema,
            records=tuple(self.records[i] for i in idx),
            tasks={t: tuple(v[i] for i in idx) for t, v in self.tasks.items()},
        )

    def to_dict(self) -> dict:
        return {
            "schema": self.schema.to_dict(),
            "records": [
                {
                    "id": r.id,
                    "static": r.static_values,
                    "series": {k: [list(p) for p in v] for k, v in r.series_values.items()},
                }
                for r in self.records
            ],
            "tasks": {t: list(v) for t, v in self.tasks.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecordSet":
        records = tuple(
            Record(
                id=r["id"],
                static_values=dict(r.get("static", {})),
                series_values={
                    k: [tuple(p) for p in v] for k, v in r.get("series", {}).items()
                },
            )
            for r in d["records"]
        )
        return cls(
            schema=FeatureSchema.from_dict(d["schema"]),
            records=records,
            tasks={t: tuple(v) for t, v in d.get("tasks", {}).items()},
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "RecordSet":
        return cls.from_dict(json.loads(Path(path).read_text()))


# --------------------------------------------------------------------------
# CSV ingestion


def _parse_number(cell: str, column: str, row_id: str) -> float:
    try:
        return float(cell)
    except ValueError:
        raise MalformedNumber(
            f"record {row_id!r}, column {column!r}: not a number: {cell!r}"
        ) from None


def _parse_series(cell: str, column: str, row_id: str) -> list:
    pairs = []
    for chunk in cell.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        if ":" not in chunk:
            raise MalformedNumber(
                f"record {row_id!r}, column {column!r}: bad series chunk {chunk!r}"
            )
        t_str, v_str = chunk.split(":", 1)
        pairs.append(
            (
                _parse_number(t_str, column, row_id),
                _parse_number(v_str, column, row_id),
            )
        )
    pairs.sort(key=lambda p: p[0])
    times = [t for t, _ in pairs]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise MalformedNumber(
            f"record {row_id!r}, column {column!r}: duplicate time offsets"
        )
    return pairs


def load_csv(path: str | Path, schema: FeatureSchema) -> RecordSet:
    """Load a CSV file into a RecordSet.

    Empty cells become missing values.  Label cells must be 0 or 1; an
    empty label cell is an error because labels are ground truth.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UnknownColumn(f"{path}: empty file, header row required") from None

        if "id" not in header:
            raise UnknownColumn(f"{path}: mandatory `id` column missing")
        feature_cols = {}
        label_cols = {}
        for i, col in enumerate(header):
            if col == "id":
                id_idx = i
            elif col.startswith(LABEL_PREFIX):
                label_cols[i] = col[len(LABEL_PREFIX):]
            else:
                try:
                    feature_cols[i] = schema.get(col)
                except KeyError:
                    raise UnknownColumn(
                        f"{path}: column {col!r} is neither a schema feature "
                        "nor a label"
                    ) from None

        records = []
        labels: dict[str, list] = {t: [] for t in label_cols.values()}
        seen_ids = set()
        for row in reader:
            if not row:
                continue
            rid = row[id_idx].strip()
            if rid in seen_ids:
                raise DuplicateId(f"{path}: duplicate record id {rid!r}")
            seen_ids.add(rid)
            static, series = {}, {}
            for i, fdef in feature_cols.items():
                cell = row[i].strip() if i < len(row) else ""
                if not cell:
                    continue
                if fdef.kind == "static-numeric":
                    static[fdef.name] = _parse_number(cell, fdef.name, rid)
                elif fdef.kind == "static-categorical":
                    static[fdef.name] = cell
                else:
                    pairs = _parse_series(cell, fdef.name, rid)
                    if pairs:
                        series[fdef.name] = pairs
            for i, task in label_cols.items():
                cell = row[i].strip() if i < len(row) else ""
                if cell not in ("0", "1"):
                    raise MissingLabel(
                        f"{path}: record {rid!r}, task {task!r}: label must be "
                        f"0 or 1, got {cell!r}"
                    )
                labels[task].append(int(cell))
            records.append(Record(id=rid, static_values=static, series_values=series))

    return RecordSet(
        schema=schema,
        records=tuple(records),
        tasks={t: tuple(v) for t, v in labels.items()},
    )


# --------------------------------------------------------------------------
# Validation report


@dataclass(frozen=True)
class FeatureReport:
    feature: str
    missing_count: int
    missing_rate: float
    out_of_range_count: int


@dataclass(frozen=True)
class ValidationReport:
    n_records: int
    per_feature: tuple[FeatureReport, ...]

    @property
    def total_out_of_range(self) -> int:
        return sum(f.out_of_range_count for f in self.per_feature)

    def feature(self, name: str) -> FeatureReport:
        for f in self.per_feature:
            if f.feature == name:
                return f
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "features": [
                {
                    "feature": f.feature,
                    "missing_count": f.missing_count,
                    "missing_rate": f.missing_rate,
                    "out_of_range_count": f.out_of_range_count,
                }
                for f in self.per_feature
            ],
        }


def validate(recordset: RecordSet) -> ValidationReport:
    """Report missing counts and plausible-range violations per feature.

    Out-of-range values are warnings, not errors: real EHR data contains
    physiologic outliers.  The data is never mutated.
    """
    n = len(recordset)
    reports = []
    for fdef in recordset.schema:
        missing = 0
        out_of_range = 0
        lo_hi = fdef.plausible_range
        for rec in recordset.records:
            if fdef.kind == "timeseries-numeric":
                pairs = rec.series_values.get(fdef.name)
                if not pairs:
                    missing += 1
                    continue
                values = [v for _, v in pairs]
            else:
                if fdef.name not in rec.static_values:
                    missing += 1
                    continue
                values = (
                    [rec.static_values[fdef.name]] if fdef.is_numeric else []
                )
            if lo_hi is not None:
                lo, hi = lo_hi
                out_of_range += sum(1 for v in values if not lo <= v <= hi)
        reports.append(
            FeatureReport(
                feature=fdef.name,
                missing_count=missing,
                missing_rate=missing / n if n else 0.0,
                out_of_range_count=out_of_range,
            )
        )
    return ValidationReport(n_records=n, per_feature=tuple(reports))


# --------------------------------------------------------------------------
# Fold splitting


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict  # record id -> fold index
    seed: int

    def test_ids(self, fold: int, recordset: RecordSet) -> list:
        return [r.id for r in recordset.records if self.assignments[r.id] == fold]

    def train_ids(self, fold: int, recordset: RecordSet) -> list:
        return [r.id for r in recordset.records if self.assignments[r.id] != fold]

    def fold_sizes(self) -> list:
        sizes = [0] * self.k
        for f in self.assignments.values():
            sizes[f] += 1
        return sizes

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "assignments": dict(self.assignments)}

    @classmethod
    def from_dict(cls, d: dict) -> "FoldPlan":
        return cls(k=d["k"], assignments=dict(d["assignments"]), seed=d["seed"])


def split_kfold(
    recordset: RecordSet,
    k: int,
    seed: int,
    stratify_task: Optional[str] = None,
) -> FoldPlan:
    """Deterministic k-fold partition; fold sizes differ by at most one.

    Shuffles over the sorted id list so the assignment is invariant to the
    record order of the input file.  With stratification, positives and
    negatives are dealt round-robin so per-fold positive counts differ by
    at most one record from an even share.
    """
    n = len(recordset)
    if k < 2:
        raise TooFewRecords("k must be at least 2")
    if k > n:
        raise TooFewRecords(f"k={k} exceeds record count {n}")

    rng = np.random.default_rng(seed)
    sorted_ids = sorted(recordset.ids)
    assignments: dict[str, int] = {}

    if stratify_task is None:
        order = rng.permutation(n)
        for pos, idx in enumerate(order):
            assignments[sorted_ids[idx]] = pos % k
    else:
        label_by_id = dict(zip(recordset.ids, recordset.tasks[stratify_task]))
        pos_ids = [i for i in sorted_ids if label_by_id[i] == 1]
        neg_ids = [i for i in sorted_ids if label_by_id[i] == 0]
        pos_ids = [pos_ids[j] for j in rng.permutation(len(pos_ids))]
        neg_ids = [neg_ids[j] for j in rng.permutation(len(neg_ids))]
        for j, rid in enumerate(pos_ids):
            assignments[rid] = j % k
        offset = len(pos_ids) % k
        for j, rid in enumerate(neg_ids):
            assignments[rid] = (offset + j) % k

    return FoldPlan(k=k, assignments=assignments, seed=seed)
