"""Operator command line: build indexes, run pipelines, evaluate, sweep.

Exit codes: 0 success, 2 usage, 3 config, 4 data integrity, 5 backend.
Every subcommand validates its input files before any network call and
honours --dry-run (validate, print the plan, touch nothing).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import config as cfgmod
from .corpus import check_gold_ids, load_corpus, load_queries
from .embedding import embed_texts
from .errors import ConfigError, DataError, RagGateError, UsageError
from .evaluation import (
    build_report,
    gold_rank_report,
    records_to_lines,
    records_to_tsv,
    score_traces,
    sweep_report,
)
from .index import FlatIndex
from .pipeline import Pipeline, PipelineMode, load_traces, save_traces
from .util import atomic_write_text

_CATEGORY_CODES = {"usage": 2, "config": 3, "data": 4, "backend": 5}


def _require_file(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{what} file not found: {path}")
    return path


def _out_index_path(out: str) -> Path:
    path = Path(out)
    if out.endswith(("/", "\\")) or path.is_dir():
        return path / "index.flat"
    return path


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="raggate",
        description="Uncertainty-gated retrieval-augmented generation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_index = sub.add_parser("index", help="embed a corpus and write an index snapshot")
    p_index.add_argument("--corpus", required=True)
    p_index.add_argument("--out", required=True)
    p_index.add_argument("--config", default=None)
    p_index.add_argument("--dry-run", action="store_true")

    p_run = sub.add_parser("run", help="run a query batch through one pipeline mode")
    p_run.add_argument("--queries", required=True)
    p_run.add_argument("--mode", default=None, help="pipeline mode (falls back to the config 'mode' key)")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--u-threshold", default=None)
    p_run.add_argument("--n-per-path", type=int, default=None)
    p_run.add_argument("--k-final", type=int, default=None)
    p_run.add_argument("--concurrency", type=int, default=None)
    p_run.add_argument("--dry-run", action="store_true")

    p_eval = sub.add_parser("eval", help="score a trace file against gold answers")
    p_eval.add_argument("--traces", required=True)
    p_eval.add_argument("--queries", required=True)
    p_eval.add_argument("--out", required=True)
    p_eval.add_argument("--recall", choices=("any", "per_doc"), default="any")
    p_eval.add_argument("--tsv", default=None)
    p_eval.add_argument("--dry-run", action="store_true")

    p_sweep = sub.add_parser("sweep", help="run dtr across thresholds and report")
    p_sweep.add_argument("--queries", required=True)
    p_sweep.add_argument("--thresholds", required=True)
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--out", required=True)
    p_sweep.add_argument("--dry-run", action="store_true")

    p_rank = sub.add_parser("gold-rank", help="histogram of gold-doc ranks by query vector")
    p_rank.add_argument("--queries", required=True)
    p_rank.add_argument("--index", required=True)
    p_rank.add_argument("--config", default=None)
    p_rank.add_argument("--out", required=True)
    p_rank.add_argument("--dry-run", action="store_true")

    return parser


def _load_pipeline(cfg: dict, overrides: dict):
    for key in ("corpus", "index"):
        if not cfg.get(key):
            raise ConfigError(f"config is missing required key {key!r}")
    corpus_path = _require_file(cfg["corpus"], "corpus")
    index_path = _require_file(cfg["index"], "index")
    chunks = load_corpus(corpus_path)
    index, embedder_id = FlatIndex.load(index_path)
    embedder = cfgmod.build_embedder(cfg)
    if embedder_id and embedder.embedder_id != embedder_id:
        raise ConfigError(
            f"index was built with embedder {embedder_id!r}, "
            f"config provides {embedder.embedder_id!r}"
        )
    generator = cfgmod.build_generator(cfg)
    embed_cache, gen_cache = cfgmod.build_caches(cfg)
    run_cfg = cfgmod.run_config_from(cfg, overrides)
    return Pipeline(
        index,
        chunks,
        embedder,
        generator,
        run_cfg,
        embed_cache=embed_cache,
        gen_cache=gen_cache,
    )


def _cmd_index(args) -> int:
    corpus_path = _require_file(args.corpus, "corpus")
    cfg = cfgmod.load_config(args.config) if args.config else {}
    out_path = _out_index_path(args.out)
    if args.dry_run:
        print(f"dry-run: would load corpus {corpus_path}")
        print(f"dry-run: would embed chunks with {cfg.get('embedder', {'type': 'hash'})}")
        print(f"dry-run: would write snapshot {out_path}")
        return 0
    chunks = load_corpus(corpus_path)
    embedder = cfgmod.build_embedder(cfg)
    embed_cache, _ = cfgmod.build_caches(cfg)
    width = int(cfg.get("run", {}).get("concurrency", 1))
    vectors = embed_texts(
        [c.embedding_text for c in chunks], embedder, embed_cache, max_in_flight=width
    )
    index = FlatIndex.build(chunks, vectors)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    index.save(out_path, embedder_id=embedder.embedder_id)
    print(f"indexed {len(index)} chunks (dim {index.dim}) -> {out_path}")
    return 0


def _cmd_run(args) -> int:
    queries_path = _require_file(args.queries, "queries")
    cfg = cfgmod.load_config(args.config)
    mode_text = args.mode if args.mode is not None else cfg.get("mode")
    if not mode_text:
        raise UsageError("no mode given: pass --mode or set 'mode' in the config file")
    mode = PipelineMode.parse(str(mode_text))
    overrides = {
        "u_threshold": args.u_threshold,
        "n_per_path": args.n_per_path,
        "k_final": args.k_final,
        "concurrency": args.concurrency,
    }
    if args.dry_run:
        cfgmod.run_config_from(cfg, overrides)  # validate
        print(f"dry-run: would load queries {queries_path}")
        print(f"dry-run: would run mode {mode} with config {args.config}")
        print(f"dry-run: would write traces {args.out}")
        return 0
    queries = load_queries(queries_path)
    pipeline = _load_pipeline(cfg, overrides)
    check_gold_ids(queries, list(pipeline.chunks_by_id.values()))
    traces = pipeline.run_batch(queries, mode)
    save_traces(traces, args.out)
    failed = [t for t in traces if t.error]
    print(f"ran {len(traces)} queries in mode {mode}; {len(failed)} failed -> {args.out}")
    if failed:
        first = failed[0]
        category = first.error.split(":", 1)[0]
        print(f"raggate: {first.error} (query {first.query_id})", file=sys.stderr)
        return _CATEGORY_CODES.get(category, 1)
    return 0


def _cmd_eval(args) -> int:
    traces_path = _require_file(args.traces, "traces")
    queries_path = _require_file(args.queries, "queries")
    if args.dry_run:
        print(f"dry-run: would score {traces_path} against {queries_path}")
        print(f"dry-run: would write report {args.out}")
        return 0
    traces = load_traces(traces_path)
    queries = load_queries(queries_path)
    records = score_traces(traces, queries)
    mode = traces[0].mode if traces else "unknown"
    report = build_report(mode, records, recall_mode=args.recall)
    text = report.to_text() + "\n" + "\n".join(records_to_lines(records)) + "\n"
    atomic_write_text(args.out, text)
    if args.tsv:
        atomic_write_text(args.tsv, records_to_tsv(records))
    print(report.to_text())
    return 0


def _parse_thresholds(raw: str) -> list[float]:
    try:
        values = [cfgmod.parse_threshold(part) for part in raw.split(",") if part.strip()]
    except ConfigError as exc:
        raise UsageError(f"invalid --thresholds value {raw!r}: {exc}") from exc
    if not values:
        raise UsageError("--thresholds must list at least one value")
    return values


def _cmd_sweep(args) -> int:
    queries_path = _require_file(args.queries, "queries")
    cfg = cfgmod.load_config(args.config)
    thresholds = _parse_thresholds(args.thresholds)
    if args.dry_run:
        print(f"dry-run: would load queries {queries_path}")
        print(f"dry-run: would run no_retrieval baseline plus dtr at {thresholds}")
        print(f"dry-run: would write report {args.out}")
        return 0
    queries = load_queries(queries_path)
    pipeline = _load_pipeline(cfg, {})
    baseline = pipeline.run_batch(queries, "no_retrieval")
    baseline_records = score_traces(baseline, queries)
    traces_by_threshold = {}
    for threshold in thresholds:
        pipeline.cfg.u_threshold = threshold
        traces_by_threshold[threshold] = pipeline.run_batch(queries, "dtr")
    rows = sweep_report(traces_by_threshold, queries, baseline_records)
    lines = ["threshold\tavg_em\tavg_f1\ttrigger_ratio\timprovement\tquery_ratio"]
    for row in rows:
        lines.append(
            f"{row.threshold:g}\t{row.avg_em:.2f}\t{row.avg_f1:.2f}"
            f"\t{row.trigger_ratio:.2f}\t{row.improvement_vs_no_retrieval:+.2f}"
            f"\t{row.query_ratio:.4f}"
        )
    text = "\n".join(lines) + "\n"
    atomic_write_text(args.out, text)
    print(text, end="")
    return 0


def _cmd_gold_rank(args) -> int:
    queries_path = _require_file(args.queries, "queries")
    index_path = _require_file(args.index, "index")
    cfg = cfgmod.load_config(args.config) if args.config else {}
    if args.dry_run:
        print(f"dry-run: would rank gold docs for {queries_path} against {index_path}")
        print(f"dry-run: would write report {args.out}")
        return 0
    queries = load_queries(queries_path)
    index, embedder_id = FlatIndex.load(index_path)
    if not args.config and embedder_id.startswith("hash-v1:"):
        cfg = {"embedder": {"type": "hash", "dim": int(embedder_id.split(":", 1)[1])}}
    embedder = cfgmod.build_embedder(cfg)
    if embedder_id and embedder.embedder_id != embedder_id:
        raise ConfigError(
            f"index was built with embedder {embedder_id!r}, "
            f"config provides {embedder.embedder_id!r}"
        )
    embed_cache, _ = cfgmod.build_caches(cfg)
    ranked = [q for q in queries if q.gold_doc_ids]
    vectors = embed_texts([q.question for q in ranked], embedder, embed_cache)
    report = gold_rank_report(index, ranked, vectors)
    lines = [f"{bucket}\t{count}" for bucket, count in report["buckets"].items()]
    lines += [f"rank {qid}\t{rank}" for qid, rank in sorted(report["ranks"].items())]
    atomic_write_text(args.out, "\n".join(lines) + "\n")
    for line in lines[:4]:
        print(line)
    return 0


_COMMANDS = {
    "index": _cmd_index,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "sweep": _cmd_sweep,
    "gold-rank": _cmd_gold_rank,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if code in (None, 0):
            return 0
        return int(code) if isinstance(code, int) else 2
    try:
        return _COMMANDS[args.command](args)
    except RagGateError as exc:
        print(f"raggate: {exc.category}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
