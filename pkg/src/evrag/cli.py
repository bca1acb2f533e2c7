"""Operator command line: ingest, index, run, score, session, aggregate, serve.

Exit codes: 0 on success, 1 on validation problems (bad input, bad flags,
contract violations), 2 on runtime or remote-provider failures. Every
output file is directly consumable by the downstream subcommand.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .annotation import (
    RatingStore,
    SessionPlan,
    aggregate_ratings,
    build_blinded_session,
    export_ratings_csv,
    ratings_report_text,
)
from .catalog import (
    Catalog,
    SourceKind,
    chunk_catalog,
    ingest_guideline_pages,
    ingest_journal_abstracts,
    ingest_wiki_articles,
    Rejection,
)
from .config import DATA_DIR_ENV, DEFAULT_SEED, PipelineConfig, parse_config_file
from .embeddings import DEFAULT_LOCAL_DIMS, LocalHashEmbedder, RemoteEmbedder
from .engine import Mode, load_questions, run_benchmark, load_run_archive, save_run_archive
from .errors import EvragError, TransportError, ValidationError
from .index import build_index, ensure_provider_match, load_index, save_index
from .providers import DEFAULT_CHAT_MODEL, MockTranscriptProvider, RemoteChatProvider
from .scoring import score_archive, write_score_artifacts
from .service import create_app, load_tokens

log = logging.getLogger("evrag")


class CliParser(argparse.ArgumentParser):
    """argparse that exits 1 (not 2) on unknown flags and bad values."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> CliParser:
    parser = CliParser(prog="evrag", description=__doc__)
    parser.add_argument("--config", help="key = value config file; flags override it")
    parser.add_argument("--seed", type=int, default=None, help=f"RNG seed (default {DEFAULT_SEED})")
    parser.add_argument("--jobs", type=int, default=1, help="worker cap for parallel stages")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=CliParser, metavar="command")

    p = sub.add_parser("ingest", help="build a document catalog from JSONL source files")
    p.add_argument("inputs", nargs="+", help="JSONL files; each record carries a 'type' field")
    p.add_argument("--out", required=True, help="output catalog directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", help="embed catalog snippets into a vector index")
    p.add_argument("--catalog", required=True, help="catalog directory from 'ingest'")
    p.add_argument("--out", required=True, help="output index file")
    p.add_argument("--provider", choices=["local", "remote"], default="local")
    p.add_argument("--model", default=None, help="embedding model name")
    p.add_argument("--dims", type=int, default=None, help="embedding dimensions")
    p.add_argument("--base-url", default=None, help="remote embedding endpoint")
    p.add_argument("--max-snippet-tokens", type=int, default=None)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("run", help="answer a question set with and/or without retrieval")
    p.add_argument("--questions", required=True, help="questions JSONL file")
    p.add_argument("--modes", default="rag,no_rag", help="comma list of modes")
    p.add_argument("--provider", choices=["mock", "remote"], default="mock")
    p.add_argument("--transcripts", default=None, help="mock transcript JSON file")
    p.add_argument("--model", default=DEFAULT_CHAT_MODEL)
    p.add_argument("--base-url", default=None, help="remote chat endpoint")
    p.add_argument("--index", default=None, help="index file (required for rag mode)")
    p.add_argument("--catalog", default=None, help="catalog directory (required for rag mode)")
    p.add_argument("--out", required=True, help="archive base path")
    p.add_argument("--run-id", default=None)
    p.add_argument("--k-docs", type=int, default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("score", help="verdicts and reports from a run archive")
    p.add_argument("--archive", required=True, help="archive base path from 'run'")
    p.add_argument("--catalog", required=True)
    p.add_argument("--kinds", default="factuality,selection", help="comma list of report kinds")
    p.add_argument("--n-top-refs", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None, help="title match threshold")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("session", help="blinded annotation session plans")
    p.add_argument("action", choices=["new", "export"])
    p.add_argument("--archive", default=None, help="archive base path (new)")
    p.add_argument("--questions", default=None, help="questions JSONL (new)")
    p.add_argument("--annotator", default=None, help="annotator id (new)")
    p.add_argument("--session-id", default=None)
    p.add_argument("--plan", default=None, help="server-side plan JSON (export)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_session)

    p = sub.add_parser("aggregate", help="ratings grid with paired significance tests")
    p.add_argument("--ratings", required=True, help="ratings JSONL file")
    p.add_argument("--plans", required=True, nargs="+", help="server-side session plan files")
    p.add_argument("--questions", required=True)
    p.add_argument("--method", choices=["paired_t", "wilcoxon", "sign_flip_permutation"], default="paired_t")
    p.add_argument("--out", default=None, help="write <out>.ratings.json and .txt")
    p.add_argument("--csv", default=None, help="also export the raw ratings as CSV")
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--data-dir", default=None, help=f"defaults to ${DATA_DIR_ENV}")
    p.add_argument("--address", default="127.0.0.1:8040")
    p.add_argument("--token-file", required=True, help="JSON map annotator -> bearer token")
    p.add_argument("--transcripts", default=None, help="mock transcript file for /api/ask")
    p.add_argument("--base-url", default=None, help="remote chat endpoint for /api/ask")
    p.add_argument("--model", default=DEFAULT_CHAT_MODEL)
    p.add_argument("--ui-dir", default=None, help="static frontend directory mounted at /ui")
    p.set_defaults(func=cmd_serve)
    return parser


def _read_jsonl(path: Path) -> list[dict]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError("unreadable_input", f"cannot read {path}: {exc}")
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValidationError("bad_json_line", f"{path}:{lineno}: {exc}")
    return records


def cmd_ingest(args) -> int:
    records = []
    for raw in args.inputs:
        records.extend(_read_jsonl(Path(raw)))
    if not records:
        raise ValidationError("empty_input", "no records in input files")
    journal = [r for r in records if r.get("type") == SourceKind.JOURNAL_ABSTRACT.value]
    guidelines = [r for r in records if r.get("type") == SourceKind.PRACTICE_PATTERN_PAGE.value]
    wiki = [r for r in records if r.get("type") == SourceKind.WIKI_ARTICLE.value]
    unknown = [r for r in records if r.get("type") not in {k.value for k in SourceKind}]

    catalog = Catalog()
    docs, rejections = ingest_journal_abstracts(journal)
    catalog.extend(docs, rejections)
    for record in guidelines:
        name = record.get("venue") or record.get("title") or "guideline"
        docs, rejections = ingest_guideline_pages(name, record.get("pages") or [])
        catalog.extend(docs, rejections)
    docs, rejections = ingest_wiki_articles(wiki)
    catalog.extend(docs, rejections)
    for record in unknown:
        catalog.rejections.append(
            Rejection(SourceKind.WIKI_ARTICLE, "unknown_type", str(record.get("type")))
        )
    catalog.save(args.out)
    manifest = catalog.manifest()
    for kind, count in sorted(manifest.counts.items()):
        print(f"{kind}: {count}")
    print(f"rejected: {manifest.rejected_count}")
    print(f"catalog: {Path(args.out) / 'catalog.jsonl'}")
    return 0


def _make_embedder(args):
    if args.provider == "local":
        dims = args.dims or DEFAULT_LOCAL_DIMS
        return LocalHashEmbedder(dims=dims, model_name=args.model or "local-hash-v1")
    if not args.base_url:
        raise ValidationError("missing_base_url", "remote embedding provider requires --base-url")
    if not args.dims:
        raise ValidationError("missing_dims", "remote embedding provider requires --dims")
    return RemoteEmbedder(args.base_url, args.model or "text-embedding-ada-002", args.dims)


def cmd_index(args) -> int:
    if args.dims is not None and args.dims < 1:
        raise ValidationError("invalid_dims", "--dims must be positive")
    catalog = Catalog.load(args.catalog)
    embedder = _make_embedder(args)
    out = Path(args.out)
    if out.exists():
        ensure_provider_match(load_index(out), embedder.spec)
    max_tokens = args.max_snippet_tokens or PipelineConfig().max_snippet_tokens
    snippets = chunk_catalog(catalog, max_tokens=max_tokens)
    index = build_index(snippets, embedder)
    save_index(index, out)
    print(f"snippets: {len(index)}")
    print(f"provider: {json.dumps(embedder.spec.to_json(), sort_keys=True)}")
    print(f"index: {out}")
    return 0


def _parse_modes(text: str) -> list[Mode]:
    modes = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            modes.append(Mode(part))
        except ValueError:
            raise ValidationError("invalid_mode", f"unknown mode {part!r}")
    if not modes:
        raise ValidationError("invalid_mode", "at least one mode is required")
    return modes


def cmd_run(args) -> int:
    questions = load_questions(args.questions)
    modes = _parse_modes(args.modes)
    config_kwargs = {}
    if args.k_docs:
        config_kwargs["k_docs"] = args.k_docs
    config = PipelineConfig(**config_kwargs)
    if args.provider == "mock":
        if not args.transcripts:
            raise ValidationError("missing_transcripts", "mock provider requires --transcripts")
        provider = MockTranscriptProvider.from_file(args.transcripts)
    else:
        if not args.base_url:
            raise ValidationError("missing_base_url", "remote provider requires --base-url")
        provider = RemoteChatProvider(args.base_url, model_name=args.model)
    index = catalog = None
    if Mode.RAG in modes:
        if not args.index or not args.catalog:
            raise ValidationError("index_missing", "rag mode requires --index and --catalog")
        index = load_index(args.index)
        catalog = Catalog.load(args.catalog)
    run_id = args.run_id or Path(args.out).name
    log.info("running %d questions x %d modes", len(questions), len(modes))
    archive = run_benchmark(
        questions, modes, provider, index, catalog, config, run_id=run_id, jobs=max(1, args.jobs)
    )
    save_run_archive(archive, args.out)
    print(f"results: {len(archive.results)}")
    print(f"failures: {len(archive.failures)}")
    print(f"archive: {args.out}.results.jsonl")
    return 0


def cmd_score(args) -> int:
    archive = load_run_archive(args.archive)
    catalog = Catalog.load(args.catalog)
    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for kind in kinds:
        if kind not in ("factuality", "selection"):
            raise ValidationError("invalid_kind", f"unknown report kind {kind!r}")
    overrides = {}
    if args.n_top_refs:
        overrides["n_top_refs"] = args.n_top_refs
    if args.threshold:
        overrides["title_match_threshold"] = args.threshold
    config = PipelineConfig.from_mapping({**archive.config.to_json(), **overrides})
    for result in archive.results:
        for hit in result.hits_used:
            if hit.doc_id not in catalog:
                raise ValidationError(
                    "archive_catalog_mismatch",
                    f"archived hit {hit.doc_id!r} not in catalog; wrong --catalog?",
                )
    artifacts = score_archive(archive, catalog, config)
    write_score_artifacts(artifacts, args.archive, kinds)
    if "factuality" in kinds:
        for label, pct in sorted(artifacts.factuality["percentages"].items()):
            shown = "n/a" if pct is None else f"{pct:.1f}%"
            print(f"{label}: {artifacts.factuality['counts'][label]} ({shown})")
    if "selection" in kinds and artifacts.selection is not None:
        agg = artifacts.selection
        sd = f"{agg.rank_sd:.2f}" if agg.rank_sd is not None else "n/a"
        print(f"selected: {100 * agg.overall_fraction:.1f}%")
        print(f"mean rank: {agg.mean_rank:.2f} (sd {sd}), median {agg.rank_median:.2f}")
    return 0


def cmd_session(args) -> int:
    if args.action == "new":
        for flag in ("archive", "questions", "annotator"):
            if not getattr(args, flag):
                raise ValidationError("missing_flag", f"session new requires --{flag}")
        questions = load_questions(args.questions)
        archive = load_run_archive(args.archive)
        seed = args.seed if args.seed is not None else DEFAULT_SEED
        plan = build_blinded_session(questions, archive, args.annotator, seed, session_id=args.session_id)
        plan.save(args.out)
        print(f"seed: {seed}")
        print(f"items: {len(plan.items)}")
        print(f"plan: {args.out}")
        return 0
    if not args.plan:
        raise ValidationError("missing_flag", "session export requires --plan")
    plan = SessionPlan.load(args.plan)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(plan.to_rater_json(), fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
    print(f"rater view: {args.out}")
    return 0


def cmd_aggregate(args) -> int:
    store = RatingStore(args.ratings)
    if len(store) == 0:
        raise ValidationError("no_ratings", f"no ratings in {args.ratings}")
    plans = [SessionPlan.load(p) for p in args.plans]
    questions = load_questions(args.questions)
    report = aggregate_ratings(store, plans, questions, method=args.method)
    text = ratings_report_text(report)
    print(text, end="")
    if args.out:
        with open(f"{args.out}.ratings.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        Path(f"{args.out}.ratings.txt").write_text(text, encoding="utf-8")
        print(f"report: {args.out}.ratings.json")
    if args.csv:
        export_ratings_csv(store, args.csv)
        print(f"csv: {args.csv}")
    return 0


def cmd_serve(args) -> int:
    import socket

    import uvicorn

    data_dir = args.data_dir or os.environ.get(DATA_DIR_ENV)
    if not data_dir:
        raise ValidationError("missing_data_dir", f"--data-dir or ${DATA_DIR_ENV} is required")
    if not Path(data_dir).is_dir():
        raise ValidationError("missing_data_dir", f"data directory {data_dir} does not exist")
    tokens = load_tokens(args.token_file)
    provider = None
    if args.transcripts:
        provider = MockTranscriptProvider.from_file(args.transcripts)
    elif args.base_url:
        provider = RemoteChatProvider(args.base_url, model_name=args.model)
    host, _, port_text = args.address.partition(":")
    host = host or "127.0.0.1"
    port = int(port_text or 8040)
    try:
        probe = socket.socket()
        probe.bind((host, port))
        probe.close()
    except OSError as exc:
        print(f"evrag: cannot bind {args.address}: {exc}", file=sys.stderr)
        return 2
    app = create_app(Path(data_dir), tokens, llm_provider=provider, ui_dir=args.ui_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="warning")
    except OSError as exc:
        print(f"evrag: cannot bind {args.address}: {exc}", file=sys.stderr)
        return 2
    return 0


def _apply_config_defaults(args) -> None:
    if not args.config:
        return
    values = parse_config_file(args.config)
    if args.seed is None and "seed" in values:
        args.seed = int(values["seed"])
    for key, value in values.items():
        if hasattr(args, key) and getattr(args, key) in (None,):
            setattr(args, key, value)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not getattr(args, "command", None):
        parser.print_help()
        return 1
    try:
        _apply_config_defaults(args)
        return args.func(args)
    except ValidationError as exc:
        print(f"evrag: {exc.code}: {exc.message}", file=sys.stderr)
        return 1
    except TransportError as exc:
        print(f"evrag: {exc.code}: {exc.message}", file=sys.stderr)
        return 2
    except EvragError as exc:
        print(f"evrag: {exc.code}: {exc.message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
