"""Command-line interface.

Verbs compose through files on disk: `ingest` and `synthesize` produce
record sets, `embed` produces feature matrices, `run`/`sweep` evaluate a
config, `report` re-emits a stored report.  Exit codes: 0 success,
1 config error, 2 backend error, 3 degenerate data.

Environment overrides (endpoint and cache path only): TABEMBED_ENDPOINT,
TABEMBED_CACHE.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import errors
from .backends import BackendDescriptor, make_backend
from .cache import EmbeddingCache
from .pipeline import (
    EvalReport,
    emit_report,
    load_experiment_config,
    run_experiment,
    training_size_sweep,
)
from .pooling import PoolingStrategy, build_feature_matrix
from .schema import FeatureSchema
from .serializer import PromptConfig, SerializationConfig
from .synth import (
    SynthesisSpec,
    generate_synthetic,
    null_signal_spec,
    sepsis_like_spec,
)
from .tabular import RecordSet, load_csv, validate

_CONFIG_ERRORS = (
    errors.ConfigError,
    errors.IngestError,
    errors.UnknownTemplate,
    errors.EmptyQuestion,
    FileNotFoundError,
    json.JSONDecodeError,
)
_BACKEND_ERRORS = (errors.BackendError,)
_DATA_ERRORS = (
    errors.DegenerateLabels,
    errors.SingleClass,
    errors.TooFewRecords,
    errors.TooFewValidResamples,
    errors.InfeasiblePrevalence,
    errors.FractionTooSmall,
    errors.EmptyFeatureColumn,
    errors.ConstantInput,
    errors.EmptyMatrix,
)


def _env_endpoint(flag_value):
    return flag_value or os.environ.get("TABEMBED_ENDPOINT") or None


def _env_cache(flag_value):
    return flag_value or os.environ.get("TABEMBED_CACHE") or None


def cmd_ingest(args) -> int:
    schema = FeatureSchema.load(args.schema)
    rs = load_csv(args.csv, schema)
    report = validate(rs)
    rs.save(args.out)
    print(f"ingested {len(rs)} records, {len(rs.tasks)} tasks -> {args.out}")
    for fr in report.per_feature:
        if fr.missing_count or fr.out_of_range_count:
            print(
                f"  {fr.feature}: missing {fr.missing_count} "
                f"({fr.missing_rate:.1%}), out-of-range {fr.out_of_range_count}"
            )
    return 0


def cmd_synthesize(args) -> int:
    if args.spec:
        spec = SynthesisSpec.from_dict(json.loads(Path(args.spec).read_text()))
    elif args.preset == "sepsis":
        spec = sepsis_like_spec(
            n_records=args.n, seed=args.seed, missing_rate=args.missing_rate
        )
    elif args.preset == "null":
        spec = null_signal_spec(n_records=args.n, seed=args.seed)
    else:
        raise errors.ConfigError("synthesize needs --spec or --preset")
    rs = generate_synthetic(spec)
    rs.save(args.out)
    rates = {t: sum(v) / len(v) for t, v in rs.tasks.items()}
    print(f"synthesized {len(rs)} records -> {args.out}; positive rates {rates}")
    return 0


def cmd_embed(args) -> int:
    rs = RecordSet.load(args.recordset)
    descriptor = BackendDescriptor(
        kind=args.backend_kind,
        endpoint=_env_endpoint(args.backend_endpoint),
        embedding_dim=args.dim,
        seed=args.backend_seed,
    )
    scfg = SerializationConfig(format=args.format, template_id=args.template)
    backend = make_backend(descriptor, rs.schema, scfg)
    cache_path = _env_cache(args.cache)
    cache = EmbeddingCache(cache_path) if cache_path else None
    fm = build_feature_matrix(
        rs, scfg, PromptConfig(), backend,
        PoolingStrategy(args.pooling), cache=cache, jobs=args.jobs,
    )
    fm.save_binary(args.out)
    print(f"embedded {fm.shape[0]} records x {fm.shape[1]} dims -> {args.out}")
    if args.csv:
        fm.save_csv(args.csv)
        print(f"wrote csv -> {args.csv}")
    return 0


def _load_cfg(args):
    cfg = load_experiment_config(
        args.config,
        endpoint_override=_env_endpoint(args.backend_endpoint),
        cache_override=_env_cache(args.cache),
    )
    if args.seed is not None:
        cfg = replace(cfg, master_seed=args.seed)
    if args.jobs is not None:
        cfg = replace(cfg, jobs=args.jobs)
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    return cfg


def cmd_run(args) -> int:
    cfg = _load_cfg(args)
    report = run_experiment(cfg)
    written = emit_report(report, ("json", "csv", "markdown-table"), cfg.out_dir)
    for path in written:
        print(f"wrote {path}")
    if report.data["errors"]:
        print(f"{len(report.data['errors'])} stage error(s) recorded in the report")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args)
    fractions = [float(x) for x in args.fractions.split(",") if x]
    result = training_size_sweep(cfg, fractions)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "sweep.json"
    path.write_text(json.dumps(result, sort_keys=True, indent=2))
    print(f"wrote {path}")
    for row in result["rows"]:
        ci = row["auroc"]
        print(
            f"  {row['task']} fraction {row['fraction']}: "
            f"auroc {ci['point']:.4f} ({ci['lo']:.4f}, {ci['hi']:.4f})"
        )
    return 0


def cmd_report(args) -> int:
    report = EvalReport.from_json(Path(args.report).read_text())
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    written = emit_report(report, formats, args.out or ".")
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabembed",
        description="tabular-to-text feature extraction and benchmarking toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load a CSV into a record-set file")
    p.add_argument("--schema", required=True, help="feature schema JSON")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("synthesize", help="generate a synthetic record set")
    p.add_argument("--spec", help="synthesis spec JSON")
    p.add_argument("--preset", choices=["sepsis", "null"])
    p.add_argument("--n", type=int, default=660)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--missing-rate", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_synthesize)

    p = sub.add_parser("embed", help="build an embedding feature matrix")
    p.add_argument("--recordset", required=True)
    p.add_argument(
        "--backend-kind",
        default="mock-informative",
        choices=["http", "mock-informative", "random"],
    )
    p.add_argument("--backend-endpoint")
    p.add_argument("--backend-seed", type=int, default=0)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--format", default="narrative")
    p.add_argument("--template", default="clinical_narrative")
    p.add_argument("--pooling", default="max")
    p.add_argument("--cache", help="embedding cache directory")
    p.add_argument("--jobs", type=int, default=1, help="concurrent backend requests")
    p.add_argument("--out", required=True, help="binary matrix output path")
    p.add_argument("--csv", help="also write an inspection CSV")
    p.set_defaults(fn=cmd_embed)

    for name, fn, extra in (
        ("run", cmd_run, None),
        ("sweep", cmd_sweep, "fractions"),
    ):
        p = sub.add_parser(name, help=f"{name} an experiment config")
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--jobs", type=int)
        p.add_argument("--backend-endpoint")
        p.add_argument("--cache")
        p.add_argument("--out", help="output directory")
        if extra == "fractions":
            p.add_argument("--fractions", required=True, help="e.g. 0.1,0.5,1.0")
        p.set_defaults(fn=fn)

    p = sub.add_parser("report", help="re-emit a stored report")
    p.add_argument("--report", required=True, help="report.json path")
    p.add_argument("--formats", default="json,csv,markdown-table")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _BACKEND_ERRORS as e:
        print(f"backend error: {e}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as e:
        print(f"degenerate data: {e}", file=sys.stderr)
        return 3
    except _CONFIG_ERRORS as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
