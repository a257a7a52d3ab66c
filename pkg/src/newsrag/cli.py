"""Command line entry point: ``newsrag <verb>``.

Exit codes: 0 success, 1 validation failure, 2 I/O or endpoint failure.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from . import chunker, ingest as ingest_mod, qa
from .config import ServiceConfig, load_config
from .core import DocumentChunk, EndpointUnavailable, NewsRagError, format_utc
from .embedder import make_embedder
from .engine import RagEngine
from .evaluation import make_judge, render_table, run_eval
from .index import SnapshotError, VectorIndex, build_index
from .llm import ChatClient

log = logging.getLogger("newsrag")

EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2


class JsonLogFormatter(logging.Formatter):
    def format(self, record: logging.LogRecord) -> str:
        entry = {
            "ts": self.formatTime(record, "%Y-%m-%dT%H:%M:%S"),
            "level": record.levelname,
            "logger": record.name,
            "msg": record.getMessage(),
        }
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry, ensure_ascii=False)


def setup_logging(level: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLogFormatter())
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level.upper())


class Failure(Exception):
    def __init__(self, message: str, exit_code: int):
        super().__init__(message)
        self.exit_code = exit_code


def _cfg(ctx: click.Context) -> ServiceConfig:
    return ctx.obj["config"]


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML/JSON config file.")
@click.option("--log-level", default=None, help="Override the configured log level.")
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], log_level: Optional[str]) -> None:
    """Broadcast-news retrieval QA pipeline."""
    if config_path and not Path(config_path).is_file():
        raise Failure(f"config file not found: {config_path}", EXIT_IO)
    cfg = load_config(config_path)
    setup_logging(log_level or cfg.log_level)
    ctx.obj = {"config": cfg}


@cli.command()
@click.argument("root", type=click.Path())
@click.option("--out", "out_path", default="documents.jsonl", show_default=True)
@click.option("--manifest", "manifest_path", default="manifest.json", show_default=True)
@click.option("--language", default=None, help="Keep only this ISO-639-1 language.")
def ingest(root: str, out_path: str, manifest_path: str, language: Optional[str]) -> None:
    """Parse transcripts under ROOT into documents and a corpus manifest."""
    if not Path(root).is_dir():
        raise Failure(f"not a directory: {root}", EXIT_IO)
    report = ingest_mod.ingest_directory(root, language=language)
    ingest_mod.write_documents(report.documents, out_path)
    manifest = report.manifest()
    manifest["errors"] = [e.to_dict() for e in report.errors]
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    for e in report.errors:
        click.echo(f"{e.path}:{e.line_no or '-'}: {e.code}: {e.message}", err=True)
    click.echo(ingest_mod.render_manifest(manifest))
    click.echo(f"{len(report.documents)} documents written to {out_path}, {len(report.errors)} errors")
    if report.errors and not report.documents:
        raise Failure("no documents ingested", EXIT_INVALID)


@cli.command()
@click.argument("docs", type=click.Path())
@click.option("--out", "out_path", default="chunks.jsonl", show_default=True)
@click.option("--max-chars", type=int, default=None)
@click.option("--overlap-chars", type=int, default=None)
@click.pass_context
def chunk(ctx, docs: str, out_path: str, max_chars: Optional[int], overlap_chars: Optional[int]) -> None:
    """Split DOCS (documents JSONL) into chunks."""
    settings = _cfg(ctx).chunking
    policy = chunker.ChunkPolicy(
        max_chars if max_chars is not None else settings.max_chars,
        overlap_chars if overlap_chars is not None else settings.overlap_chars,
    )
    policy.validate()
    n = 0
    with open(out_path, "w", encoding="utf-8") as f:
        for doc in ingest_mod.read_documents(docs):
            for c in chunker.split(doc, policy):
                f.write(json.dumps(c.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
                n += 1
    click.echo(f"{n} chunks written to {out_path} (max_chars={policy.max_chars}, overlap_chars={policy.overlap_chars})")


@cli.group()
def index() -> None:
    """Build, export and import index snapshots."""


def _read_chunks(path: str):
    with open(path, encoding="utf-8") as f:
        return [DocumentChunk.from_dict(json.loads(line)) for line in f if line.strip()]


@index.command("build")
@click.argument("chunks", type=click.Path())
@click.option("--out", "out_path", default=None, help="Snapshot path (defaults to the configured one).")
@click.pass_context
def index_build(ctx, chunks: str, out_path: Optional[str]) -> None:
    cfg = _cfg(ctx)
    idx = build_index(_read_chunks(chunks), make_embedder(cfg.embedder))
    out = out_path or cfg.snapshot_path
    idx.save_snapshot(out)
    click.echo(f"indexed {len(idx)} chunks (dim={idx.dim}) -> {out}")


@index.command("export")
@click.option("--snapshot", default=None)
@click.option("--out", "out_path", required=True)
@click.pass_context
def index_export(ctx, snapshot: Optional[str], out_path: str) -> None:
    idx = VectorIndex.load_snapshot(snapshot or _cfg(ctx).snapshot_path)
    n = idx.export_jsonl(out_path)
    click.echo(f"exported {n} records -> {out_path}")


@index.command("import")
@click.argument("jsonl", type=click.Path())
@click.option("--out", "out_path", default=None)
@click.pass_context
def index_import(ctx, jsonl: str, out_path: Optional[str]) -> None:
    cfg = _cfg(ctx)
    idx = VectorIndex.import_jsonl(jsonl, dim=cfg.embedder.dim)
    out = out_path or cfg.snapshot_path
    idx.save_snapshot(out)
    click.echo(f"imported {len(idx)} records -> {out}")


def _engine(cfg: ServiceConfig, snapshot: Optional[str], need_index: bool) -> RagEngine:
    idx = VectorIndex.load_snapshot(snapshot or cfg.snapshot_path) if need_index else None
    return RagEngine(idx, make_embedder(cfg.embedder), ChatClient(cfg.llm), cfg.engine.build())


@cli.command()
@click.argument("question")
@click.option("--no-rag", is_flag=True, help="Answer without retrieval.")
@click.option("--k", type=int, default=None)
@click.option("--snapshot", default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the answer as JSON.")
@click.pass_context
def ask(ctx, question: str, no_rag: bool, k: Optional[int], snapshot: Optional[str], as_json: bool) -> None:
    """Answer QUESTION, citing the retrieved transcript chunks."""
    cfg = _cfg(ctx)
    if no_rag:
        cfg.engine.use_rag = False
    if k is not None:
        cfg.engine.k = k
    engine = _engine(cfg, snapshot, cfg.engine.use_rag)
    answer = engine.answer(question)
    sources = []
    for h in answer.sources:
        meta = engine.index.get(h.chunk_id).metadata
        sources.append(
            {
                "rank": h.rank,
                "chunk_id": h.chunk_id,
                "recording_id": meta.recording_id,
                "source": meta.source,
                "start_time": format_utc(meta.start_time),
                "end_time": format_utc(meta.end_time),
                "score": h.score,
            }
        )
    if as_json:
        click.echo(json.dumps({**answer.to_dict(), "sources": sources}, ensure_ascii=False, indent=2))
        return
    click.echo(answer.text)
    click.echo("")
    if not sources:
        click.echo("Sources: (none)")
        return
    click.echo("Sources:")
    for s in sources:
        click.echo(
            f"  [{s['rank']}] {s['chunk_id']} recording={s['recording_id']} ({s['source']}) "
            f"{s['start_time']}..{s['end_time']} score={s['score']:.6f}"
        )


@cli.command("extract-qa")
@click.argument("corpus", type=click.Path())
@click.option("--out", "out_path", default="qa_train.jsonl", show_default=True)
@click.option("--eval-out", "eval_path", default="qa_eval.jsonl", show_default=True)
@click.option("--manifest", "manifest_path", default="qa_manifest.json", show_default=True)
@click.option("--target-pairs", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=4, show_default=True)
@click.pass_context
def extract_qa(ctx, corpus, out_path, eval_path, manifest_path, target_pairs, seed, workers) -> None:
    """Generate Alpaca-style QA pairs from CORPUS (documents JSONL)."""
    cfg = _cfg(ctx)
    if not 0 < target_pairs <= qa.MAX_PAIRS_PER_DOC:
        raise Failure(f"--target-pairs must be in 1..{qa.MAX_PAIRS_PER_DOC}", EXIT_INVALID)
    docs = ingest_mod.read_documents(corpus)
    report = qa.generate_pairs(docs, ChatClient(cfg.llm), target_pairs=target_pairs, workers=workers)
    train, evaluation = qa.split_eval(report.pairs, seed=seed)
    qa.write_alpaca_jsonl(train, out_path)
    qa.write_alpaca_jsonl(evaluation, eval_path)
    manifest = qa.build_manifest(
        train,
        evaluation,
        settings={"target_pairs": target_pairs, "model_id": cfg.llm.model_id, "seed": seed},
    )
    manifest["failures"] = report.failures
    manifest["dropped_blocks"] = report.dropped_blocks
    manifest["duplicates_removed"] = report.duplicates_removed
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    click.echo(f"{len(train)} fine-tune pairs, {len(evaluation)} evaluation pairs, {len(report.failures)} failed documents")
    if docs and len(report.failures) == len(docs):
        raise Failure("every document failed", EXIT_IO)


@cli.command()
@click.argument("eval_set", type=click.Path())
@click.option("--out", "out_path", default="eval_report.json", show_default=True)
@click.option("--no-rag", is_flag=True)
@click.option("--setting", default=None, help="Label for the setting column.")
@click.option("--model", default=None, help="Label for the model column.")
@click.option("--snapshot", default=None)
@click.pass_context
def evaluate(ctx, eval_set, out_path, no_rag, setting, model, snapshot) -> None:
    """Score the pipeline on EVAL_SET (Alpaca JSONL)."""
    cfg = _cfg(ctx)
    if no_rag:
        cfg.engine.use_rag = False
    pairs = qa.read_alpaca_jsonl(eval_set)
    engine = _engine(cfg, snapshot, cfg.engine.use_rag)
    judge_client = None
    if cfg.judge.kind == "llm":
        judge_llm = dataclasses.replace(
            cfg.llm,
            endpoint_url=cfg.judge.endpoint or cfg.llm.endpoint_url,
            model_id=cfg.judge.model_id or cfg.llm.model_id,
        )
        judge_client = ChatClient(judge_llm)
    judge = make_judge(cfg.judge, judge_client)
    report = run_eval(
        pairs,
        engine,
        judge,
        engine.embedder,
        model=model,
        setting=setting,
        extra_provenance={
            "chunking": {"max_chars": cfg.chunking.max_chars, "overlap_chars": cfg.chunking.overlap_chars},
            "embedder": cfg.embedder.model_name if cfg.embedder.kind == "remote" else "deterministic-hash",
            "generation": cfg.llm.generation_params(),
        },
    )
    report.write(out_path)
    click.echo(render_table([report.summary()]))
    click.echo(f"{len(report.samples)} scored, {len(report.failures)} failed -> {out_path}")


@cli.command()
@click.option("--bind", default=None, help="host:port (defaults to bind_addr).")
@click.pass_context
def serve(ctx, bind: Optional[str]) -> None:
    """Serve /v1/query and /healthz over HTTP."""
    import uvicorn

    from .service import create_app

    cfg = _cfg(ctx)
    if bind:
        cfg.bind_addr = bind
    host, port = cfg.host_port
    uvicorn.run(create_app(cfg), host=host, port=port, log_level=cfg.log_level.lower())


def _exit_code(e: BaseException) -> int:
    if isinstance(e, (EndpointUnavailable, SnapshotError, OSError)):
        return EXIT_IO
    if isinstance(e, NewsRagError) and e.code == "VERSION_UNSUPPORTED":
        return EXIT_IO
    return EXIT_INVALID


def main(argv: Optional[list[str]] = None) -> int:
    try:
        cli.main(args=argv, prog_name="newsrag", standalone_mode=False)
    except click.exceptions.Abort:
        return EXIT_INVALID
    except click.ClickException as e:
        e.show()
        return EXIT_INVALID
    except Failure as e:
        click.echo(f"error: {e}", err=True)
        return e.exit_code
    except (NewsRagError, OSError) as e:
        code = getattr(e, "code", type(e).__name__)
        click.echo(f"error: {code}: {e}", err=True)
        return _exit_code(e)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
