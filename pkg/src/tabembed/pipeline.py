"""Experiment orchestration: configs, end-to-end runs, training-size
sweeps, leakage auditing, and report emission.

Every training-fold artifact (imputation means, scalers, grid selection,
prompt prevalence, trained models) is computed inside one per-fold
builder, so the leakage audit can poison test folds and assert the
artifacts are unchanged byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .backends import BackendDescriptor, make_backend
from .cache import EmbeddingCache
from .errors import ConfigError, FractionTooSmall, TabembedError
from .learners import grid_search
from .matrix import FeatureMatrix, Imputation, fit_raw_stats, prepare_raw_matrix
from .metrics import (
    MetricCI,
    auroc,
    bootstrap_ci,
    calibration_curve,
    confusion_matrix,
    pearson,
    spearman,
)
from .pooling import PoolingStrategy, build_feature_matrix, record_bundle
from .scoring import ab_probability, renormalized_p_yes, sequence_loglik
from .serializer import (
    PromptConfig,
    QuestionType,
    SerializationConfig,
    system_prompt,
)
from .synth import SynthesisSpec, generate_synthetic
from .tabular import FoldPlan, Record, RecordSet, split_kfold

SOURCE_KINDS = ("raw", "embedding", "ab-probability", "sequence-likelihood")

YES_ANSWER = "A. Yes."
NO_ANSWER = "B. No."


@dataclass(frozen=True)
class FeatureSourceConfig:
    kind: str = "raw"
    backend: Optional[BackendDescriptor] = None
    serialization: SerializationConfig = field(default_factory=SerializationConfig)
    pooling: PoolingStrategy = field(default_factory=PoolingStrategy)
    question_type: str = "general"  # embedding sources only
    system_persona: Optional[int] = None
    include_prevalence: bool = False
    chat_template: str = "plain"
    zscore: bool = False
    learner_on_scores: bool = False  # probability sources: also feed the learner

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unknown feature source {self.kind!r}")
        if self.kind != "raw" and self.backend is None:
            raise ConfigError(f"feature source {self.kind!r} requires a backend")

    @property
    def uses_learner(self) -> bool:
        return self.kind in ("raw", "embedding") or self.learner_on_scores

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "backend": self.backend.to_dict() if self.backend else None,
            "serialization": {
                "format": self.serialization.format,
                "template_id": self.serialization.template_id,
                "decimal_places": self.serialization.decimal_places,
            },
            "pooling": self.pooling.kind,
            "question_type": self.question_type,
            "system_persona": self.system_persona,
            "include_prevalence": self.include_prevalence,
            "chat_template": self.chat_template,
            "zscore": self.zscore,
            "learner_on_scores": self.learner_on_scores,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSourceConfig":
        ser = d.get("serialization", {})
        return cls(
            kind=d.get("kind", "raw"),
            backend=BackendDescriptor.from_dict(d["backend"]) if d.get("backend") else None,
            serialization=SerializationConfig(
                format=ser.get("format", "narrative"),
                template_id=ser.get("template_id", "clinical_narrative"),
                decimal_places=ser.get("decimal_places", 2),
            ),
            pooling=PoolingStrategy(d.get("pooling", "max")),
            question_type=d.get("question_type", "general"),
            system_persona=d.get("system_persona"),
            include_prevalence=d.get("include_prevalence", False),
            chat_template=d.get("chat_template", "plain"),
            zscore=d.get("zscore", False),
            learner_on_scores=d.get("learner_on_scores", False),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    tasks: tuple
    source: FeatureSourceConfig = field(default_factory=FeatureSourceConfig)
    dataset_path: Optional[str] = None
    synthesis: Optional[SynthesisSpec] = None
    learner: str = "gbt"
    grid: Optional[dict] = None
    k: int = 5
    fold_seed: int = 0
    stratify: Optional[str] = None
    grid_k: int = 3
    master_seed: int = 0
    n_resamples: int = 1000
    ci_level: float = 0.95
    calibration_bins: int = 10
    correlate_with_raw: bool = False
    imputation: Imputation = field(default_factory=lambda: Imputation("mean-from-train"))
    jobs: int = 1
    cache_path: Optional[str] = None
    out_dir: str = "out"

    def __post_init__(self):
        if (self.dataset_path is None) == (self.synthesis is None):
            raise ConfigError("config needs exactly one of dataset_path or synthesis")
        if not self.tasks:
            raise ConfigError("at least one task required")
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if self.grid_k < 2:
            raise ConfigError("grid_k must be >= 2")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "tasks": list(self.tasks),
            "source": self.source.to_dict(),
            "dataset_path": self.dataset_path,
            "synthesis": self.synthesis.to_dict() if self.synthesis else None,
            "learner": self.learner,
            "grid": self.grid,
            "k": self.k,
            "fold_seed": self.fold_seed,
            "stratify": self.stratify,
            "grid_k": self.grid_k,
            "master_seed": self.master_seed,
            "n_resamples": self.n_resamples,
            "ci_level": self.ci_level,
            "calibration_bins": self.calibration_bins,
            "correlate_with_raw": self.correlate_with_raw,
            "imputation": {"kind": self.imputation.kind, "value": self.imputation.value},
            "jobs": self.jobs,
            "cache_path": self.cache_path,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        version = d.get("schema_version", 1)
        if version != 1:
            raise ConfigError(f"unsupported config schema_version {version}")
        imp = d.get("imputation", {})
        return cls(
            tasks=tuple(d["tasks"]),
            source=FeatureSourceConfig.from_dict(d.get("source", {})),
            dataset_path=d.get("dataset_path"),
            synthesis=SynthesisSpec.from_dict(d["synthesis"]) if d.get("synthesis") else None,
            learner=d.get("learner", "gbt"),
            grid=d.get("grid"),
            k=d.get("k", 5),
            fold_seed=d.get("fold_seed", 0),
            stratify=d.get("stratify"),
            grid_k=d.get("grid_k", 3),
            master_seed=d.get("master_seed", 0),
            n_resamples=d.get("n_resamples", 1000),
            ci_level=d.get("ci_level", 0.95),
            calibration_bins=d.get("calibration_bins", 10),
            correlate_with_raw=d.get("correlate_with_raw", False),
            imputation=Imputation(imp.get("kind", "mean-from-train"), imp.get("value", 0.0)),
            jobs=d.get("jobs", 1),
            cache_path=d.get("cache_path"),
            out_dir=d.get("out_dir", "out"),
        )

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    def method_name(self) -> str:
        s = self.source
        if s.kind == "raw":
            return f"raw+{self.learner}"
        if s.kind == "embedding":
            tag = f"embedding[{s.backend.kind},{s.pooling.kind}]"
            return f"{tag}+{self.learner}"
        return f"{s.kind}+{self.learner}" if s.learner_on_scores else s.kind


def load_experiment_config(path, endpoint_override=None, cache_override=None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
    if endpoint_override and cfg.source.backend is not None:
        backend = replace(cfg.source.backend, endpoint=endpoint_override)
        cfg = replace(cfg, source=replace(cfg.source, backend=backend))
    if cache_override:
        cfg = replace(cfg, cache_path=cache_override)
    return cfg


# --------------------------------------------------------------------------
# per-fold feature building and training


def _hash_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def _hash_array(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()


def _prompt_config(cfg: ExperimentConfig, task: str, train_prevalence: float) -> PromptConfig:
    s = cfg.source
    binary = s.kind in ("ab-probability", "sequence-likelihood") or s.question_type == "binary"
    prevalence_pct = None
    if binary and (s.include_prevalence or s.system_persona == 4):
        prevalence_pct = round(100.0 * train_prevalence, 2)
    instruction = None
    if s.system_persona is not None:
        instruction = system_prompt(
            s.system_persona,
            target=task,
            prevalence_percent=prevalence_pct if s.system_persona == 4 else None,
        )
    qt = (
        QuestionType("binary", target=task, prevalence_percent=prevalence_pct)
        if binary
        else QuestionType("general")
    )
    return PromptConfig(
        question_type=qt,
        system_instruction=instruction,
        chat_template=s.chat_template,
    )


def _probability_scores(rs, ids, pcfg, cfg, backend):
    scores = []
    for rid in ids:
        bundle = record_bundle(rs, rid, cfg.source.serialization, pcfg)
        if cfg.source.kind == "ab-probability":
            scores.append(ab_probability(bundle, backend).p_yes)
        else:
            ll_yes = sequence_loglik(bundle, YES_ANSWER, backend)
            ll_no = sequence_loglik(bundle, NO_ANSWER, backend)
            scores.append(renormalized_p_yes(ll_yes, ll_no))
    return np.asarray(scores, dtype=np.float64)


@dataclass
class FoldOutcome:
    test_ids: list
    test_scores: np.ndarray
    artifacts: dict  # train-derived only; hashed by the leakage audit


def run_fold(
    rs: RecordSet,
    task: str,
    folds: FoldPlan,
    fold: int,
    cfg: ExperimentConfig,
    backend=None,
    cache=None,
    train_ids=None,
) -> FoldOutcome:
    """Build the feature source for one fold, fit the learner on the
    training split only, and score the test split.

    `train_ids` may be a subset of the fold's training ids (training-size
    sweeps); test ids always follow the fold plan.
    """
    if train_ids is None:
        train_ids = folds.train_ids(fold, rs)
    test_ids = folds.test_ids(fold, rs)
    label_by_id = dict(zip(rs.ids, rs.labels(task)))
    y_train = np.asarray([label_by_id[r] for r in train_ids], dtype=np.float64)
    artifacts: dict = {"fold": fold, "task": task, "n_train": len(train_ids)}

    source = cfg.source
    model = None
    if source.kind == "raw":
        stats = fit_raw_stats(rs, train_ids)
        artifacts["imputation_means"] = {
            k: (v if np.isfinite(v) else None) for k, v in stats.column_means.items()
        }
        artifacts["categories"] = stats.categories
        Xtr = prepare_raw_matrix(rs, cfg.imputation, stats, train_ids).values
        Xte = prepare_raw_matrix(rs, cfg.imputation, stats, test_ids).values
    elif source.kind == "embedding":
        pcfg = _prompt_config(cfg, task, float(y_train.mean()))
        fm_tr = build_feature_matrix(
            rs, source.serialization, pcfg, backend, source.pooling,
            cache=cache, record_ids=train_ids, jobs=cfg.jobs,
        )
        fm_te = build_feature_matrix(
            rs, source.serialization, pcfg, backend, source.pooling,
            cache=cache, record_ids=test_ids, jobs=cfg.jobs,
        )
        Xtr, Xte = fm_tr.values, fm_te.values
        if source.zscore:
            mu = Xtr.mean(axis=0)
            sd = Xtr.std(axis=0)
            sd = np.where(sd == 0, 1.0, sd)
            Xtr = (Xtr - mu) / sd
            Xte = (Xte - mu) / sd
            artifacts["scaler"] = {"mean": _hash_array(mu), "sd": _hash_array(sd)}
        artifacts["train_matrix_hash"] = _hash_array(Xtr)
    else:  # probability sources
        train_prev = float(y_train.mean())
        pcfg = _prompt_config(cfg, task, train_prev)
        artifacts["train_prevalence"] = round(train_prev, 12)
        test_scores = _probability_scores(rs, test_ids, pcfg, cfg, backend)
        if not source.learner_on_scores:
            return FoldOutcome(test_ids, test_scores, artifacts)
        Xtr = _probability_scores(rs, train_ids, pcfg, cfg, backend).reshape(-1, 1)
        Xte = test_scores.reshape(-1, 1)

    inner = split_kfold(
        rs.subset(train_ids), cfg.grid_k, seed=cfg.master_seed + 1000 + fold
    )
    gs = grid_search(
        cfg.learner,
        cfg.grid,
        Xtr,
        y_train,
        inner,
        seed=cfg.master_seed,
        row_ids=train_ids,
    )
    model = gs.model
    artifacts["best_params"] = gs.best_params
    artifacts["model_hash"] = _hash_json(model.to_dict())
    return FoldOutcome(test_ids, model.predict_proba(Xte), artifacts)


def _make_source_backend(cfg: ExperimentConfig, rs: RecordSet):
    if cfg.source.kind == "raw":
        return None
    return make_backend(cfg.source.backend, rs.schema, cfg.source.serialization)


def _load_recordset(cfg: ExperimentConfig) -> RecordSet:
    if cfg.dataset_path is not None:
        return RecordSet.load(cfg.dataset_path)
    return generate_synthetic(cfg.synthesis)


# --------------------------------------------------------------------------
# report


@dataclass
class EvalReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(data=json.loads(text))

    def without_runtime(self) -> dict:
        d = json.loads(json.dumps(self.data))
        d.pop("runtime", None)
        return d


def _task_metrics(scores: np.ndarray, labels: np.ndarray, cfg: ExperimentConfig) -> dict:
    ci = bootstrap_ci(
        auroc, scores, labels,
        n_resamples=cfg.n_resamples, level=cfg.ci_level, seed=cfg.master_seed,
    )
    preds = (scores >= 0.5).astype(int)
    cm = confusion_matrix(preds, labels)
    curve = calibration_curve(scores, labels, cfg.calibration_bins)
    return {
        "n": int(len(labels)),
        "auroc": ci.to_dict(),
        "accuracy": cm.accuracy,
        "confusion": cm.to_dict(),
        "calibration": curve.to_dict(),
    }


_RAW_REFERENCE_GRID = {
    "n_estimators": [100],
    "max_depth": [3],
    "learning_rate": [0.1],
    "min_child_weight": [1],
}


def run_experiment(cfg: ExperimentConfig) -> EvalReport:
    """Cross-validated evaluation of one feature source.

    Per fold: build the feature source, grid-search the learner on the
    training split, score the test split; test-fold scores are pooled
    per task and summarized with bootstrap CIs, calibration, and a
    confusion matrix.  Deterministic given (config, seeds).
    """
    t_start = time.perf_counter()
    rs = _load_recordset(cfg)
    folds = split_kfold(rs, cfg.k, cfg.fold_seed, cfg.stratify)
    backend = _make_source_backend(cfg, rs)
    cache = EmbeddingCache(cfg.cache_path) if cfg.cache_path else None
    method = cfg.method_name()

    results: dict = {}
    correlations: dict = {}
    errors: list = []
    for task in cfg.tasks:
        labels = rs.labels(task)
        scores_by_id: dict = {}
        task_failed = False
        for fold in range(cfg.k):
            try:
                outcome = run_fold(rs, task, folds, fold, cfg, backend, cache)
            except TabembedError as e:
                errors.append(
                    {"task": task, "stage": "fold", "fold": fold, "error": str(e)}
                )
                task_failed = True
                continue
            for rid, s in zip(outcome.test_ids, outcome.test_scores):
                scores_by_id[rid] = float(s)

        entry: dict = {"method": method, "failed": task_failed}
        if not task_failed:
            scores = np.asarray([scores_by_id[r] for r in rs.ids])
            try:
                entry.update(_task_metrics(scores, labels, cfg))
            except TabembedError as e:
                errors.append({"task": task, "stage": "metrics", "error": str(e)})
                entry["failed"] = True
        results[task] = {method: entry}

        if cfg.correlate_with_raw and not entry["failed"] and cfg.source.kind != "raw":
            try:
                ref_cfg = replace(
                    cfg,
                    source=FeatureSourceConfig(kind="raw"),
                    learner="gbt",
                    grid=_RAW_REFERENCE_GRID,
                )
                ref_scores_by_id: dict = {}
                for fold in range(cfg.k):
                    ref = run_fold(rs, task, folds, fold, ref_cfg)
                    for rid, s in zip(ref.test_ids, ref.test_scores):
                        ref_scores_by_id[rid] = float(s)
                ref_scores = np.asarray([ref_scores_by_id[r] for r in rs.ids])
                scores = np.asarray([scores_by_id[r] for r in rs.ids])
                correlations[task] = {
                    f"{method} vs raw+gbt": {
                        "spearman": spearman(scores, ref_scores).to_dict(),
                        "pearson": pearson(scores, ref_scores).to_dict(),
                    }
                }
            except TabembedError as e:
                errors.append({"task": task, "stage": "correlation", "error": str(e)})

    report = EvalReport(
        data={
            "schema_version": 1,
            "config_hash": cfg.config_hash(),
            "config": cfg.to_dict(),
            "method": method,
            "seeds": {
                "master": cfg.master_seed,
                "fold": cfg.fold_seed,
                "bootstrap": cfg.master_seed,
            },
            "results": results,
            "correlations": correlations,
            "errors": errors,
            "runtime": {"wall_seconds": time.perf_counter() - t_start},
        }
    )
    return report


def merge_reports(reports) -> EvalReport:
    """Combine single-method reports into one multi-method table.

    Tasks union; (task, method) collisions keep the last report's entry.
    """
    reports = list(reports)
    if not reports:
        raise ConfigError("no reports to merge")
    results: dict = {}
    correlations: dict = {}
    errors: list = []
    for rep in reports:
        for task, methods in rep.data["results"].items():
            results.setdefault(task, {}).update(methods)
        for task, block in rep.data.get("correlations", {}).items():
            correlations.setdefault(task, {}).update(block)
        errors.extend(rep.data.get("errors", []))
    return EvalReport(
        data={
            "schema_version": 1,
            "config_hash": "+".join(r.data["config_hash"] for r in reports),
            "merged_from": [r.data["config_hash"] for r in reports],
            "seeds": reports[0].data.get("seeds", {}),
            "results": results,
            "correlations": correlations,
            "errors": errors,
            "runtime": {
                "wall_seconds": sum(
                    r.data.get("runtime", {}).get("wall_seconds", 0.0) for r in reports
                )
            },
        }
    )


# --------------------------------------------------------------------------
# training-size sweep


def _subsample_train(train_ids, labels_by_id, fraction: float, seed: int):
    """Seeded stratified subsample preserving train-id order; identity at 1.0."""
    if fraction >= 1.0:
        return list(train_ids)
    rng = np.random.default_rng(seed)
    keep = set()
    for cls in (0, 1):
        ids_c = [r for r in train_ids if labels_by_id[r] == cls]
        n_keep = int(round(fraction * len(ids_c)))
        chosen = rng.permutation(len(ids_c))[:n_keep]
        keep.update(ids_c[i] for i in chosen)
    return [r for r in train_ids if r in keep]


def training_size_sweep(cfg: ExperimentConfig, fractions) -> dict:
    """Rerun the experiment with subsampled training folds; one output row
    per fraction: (fraction, pooled AUROC, CI)."""
    fractions = list(fractions)
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ConfigError("fractions must lie in (0, 1]")
    rs = _load_recordset(cfg)
    folds = split_kfold(rs, cfg.k, cfg.fold_seed, cfg.stratify)
    backend = _make_source_backend(cfg, rs)
    cache = EmbeddingCache(cfg.cache_path) if cfg.cache_path else None

    rows = []
    for task in cfg.tasks:
        labels = rs.labels(task)
        labels_by_id = dict(zip(rs.ids, labels))
        for fi, fraction in enumerate(fractions):
            scores_by_id: dict = {}
            for fold in range(cfg.k):
                train_ids = _subsample_train(
                    folds.train_ids(fold, rs),
                    labels_by_id,
                    fraction,
                    seed=cfg.master_seed + 7000 + 31 * fi + fold,
                )
                n_pos = sum(labels_by_id[r] for r in train_ids)
                if n_pos < 10:
                    raise FractionTooSmall(
                        f"fraction {fraction} leaves {n_pos} positives in fold {fold}"
                    )
                outcome = run_fold(
                    rs, task, folds, fold, cfg, backend, cache, train_ids=train_ids
                )
                for rid, s in zip(outcome.test_ids, outcome.test_scores):
                    scores_by_id[rid] = float(s)
            scores = np.asarray([scores_by_id[r] for r in rs.ids])
            ci = bootstrap_ci(
                auroc, scores, labels,
                n_resamples=cfg.n_resamples, level=cfg.ci_level, seed=cfg.master_seed,
            )
            rows.append({"task": task, "fraction": fraction, "auroc": ci.to_dict()})
    return {"config_hash": cfg.config_hash(), "rows": rows}


# --------------------------------------------------------------------------
# leakage audit


_POISON_NUMBER = 8.8888e8
_POISON_CATEGORY = "POISONED"


def poison_record(rec: Record, schema) -> Record:
    static = {}
    for name, v in rec.static_values.items():
        static[name] = _POISON_CATEGORY if isinstance(v, str) else _POISON_NUMBER
    series = {
        name: [(t, _POISON_NUMBER) for t, _ in pairs]
        for name, pairs in rec.series_values.items()
    }
    return Record(id=rec.id, static_values=static, series_values=series)


def poison_test_fold(rs: RecordSet, test_ids) -> RecordSet:
    """Replace test records' values with sentinels and flip their labels."""
    test = set(test_ids)
    records = tuple(
        poison_record(r, rs.schema) if r.id in test else r for r in rs.records
    )
    tasks = {}
    for t, vec in rs.tasks.items():
        tasks[t] = tuple(
            1 - v if rid in test else v for rid, v in zip(rs.ids, vec)
        )
    return RecordSet(schema=rs.schema, records=records, tasks=tasks)


def leakage_audit(cfg: ExperimentConfig) -> dict:
    """Poison each fold's test records and compare training artifacts.

    Returns per (task, fold) hash pairs; `clean` is True when poisoning
    the test fold changed nothing the training side computed.
    """
    rs = _load_recordset(cfg)
    folds = split_kfold(rs, cfg.k, cfg.fold_seed, cfg.stratify)
    backend = _make_source_backend(cfg, rs)
    details = []
    all_clean = True
    for task in cfg.tasks:
        for fold in range(cfg.k):
            clean_art = run_fold(rs, task, folds, fold, cfg, backend).artifacts
            poisoned_rs = poison_test_fold(rs, folds.test_ids(fold, rs))
            poisoned_backend = _make_source_backend(cfg, poisoned_rs)
            poisoned_art = run_fold(
                poisoned_rs, task, folds, fold, cfg, poisoned_backend
            ).artifacts
            h1, h2 = _hash_json(clean_art), _hash_json(poisoned_art)
            ok = h1 == h2
            all_clean &= ok
            details.append(
                {"task": task, "fold": fold, "clean_hash": h1, "poisoned_hash": h2, "clean": ok}
            )
    return {"source": cfg.source.kind, "clean": all_clean, "details": details}


# --------------------------------------------------------------------------
# emission


def _fmt_pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def emit_report(report: EvalReport, formats, out_dir) -> list:
    """Write the report in the requested formats; JSON is canonical."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if "json" in formats:
        path = out_dir / "report.json"
        path.write_text(report.to_json())
        written.append(path)

    if "csv" in formats:
        path = out_dir / "report.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["task", "method", "metric", "value"])
            for task, methods in sorted(report.data["results"].items()):
                for method, entry in sorted(methods.items()):
                    if entry.get("failed"):
                        writer.writerow([task, method, "failed", 1])
                        continue
                    ci = entry["auroc"]
                    writer.writerow([task, method, "auroc", ci["point"]])
                    writer.writerow([task, method, "auroc_ci_lo", ci["lo"]])
                    writer.writerow([task, method, "auroc_ci_hi", ci["hi"]])
                    writer.writerow([task, method, "accuracy", entry["accuracy"]])
        written.append(path)

        for task, methods in sorted(report.data["results"].items()):
            for method, entry in sorted(methods.items()):
                if entry.get("failed"):
                    continue
                cal = entry["calibration"]
                safe = method.replace("/", "_").replace("[", "_").replace("]", "_")
                path = out_dir / f"calibration_{task}_{safe}.csv"
                with path.open("w", newline="", encoding="utf-8") as fh:
                    writer = csv.writer(fh)
                    writer.writerow(["bin_mid", "predicted", "observed", "count"])
                    edges = cal["bin_edges"]
                    for i, count in enumerate(cal["counts"]):
                        writer.writerow(
                            [
                                0.5 * (edges[i] + edges[i + 1]),
                                cal["mean_predicted"][i],
                                cal["observed_rate"][i],
                                count,
                            ]
                        )
                written.append(path)

    if "markdown-table" in formats or "markdown" in formats:
        path = out_dir / "report.md"
        tasks = sorted(report.data["results"].keys())
        methods = sorted(
            {m for task in tasks for m in report.data["results"][task]}
        )
        lines = [
            "| Model/Source | " + " | ".join(f"{t} AUROC (95% CI)" for t in tasks) + " |",
            "| --- | " + " | ".join("---" for _ in tasks) + " |",
        ]
        for method in methods:
            cells = []
            for task in tasks:
                entry = report.data["results"][task].get(method)
                if entry is None or entry.get("failed"):
                    cells.append("failed")
                    continue
                ci = entry["auroc"]
                cells.append(
                    f"{_fmt_pct(ci['point'])} ({_fmt_pct(ci['lo'])}, {_fmt_pct(ci['hi'])})"
                )
            lines.append(f"| {method} | " + " | ".join(cells) + " |")
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    return written
