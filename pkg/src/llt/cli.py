"""Command-line front end: batch pipeline stages, synthetic corpora, the analyst service."""

from __future__ import annotations

import argparse
import asyncio
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .capture import CaptureConfig, CaptureServer, SessionStore, load_sessions
from .clustering import cut
from .corpus import EmptySession, corpus_from_logs, dedup, ingest_session, load_corpus, sample_per_host, save_corpus
from .families import FamilyError, export_lineage, init_families, merge_families, rename_family, split_family
from .pipeline import PipelineError, run_pipeline
from .service import DEFAULT_BIND, ServiceState, create_app, parse_bind
from .session import EXPORT_FORMATS, PipelineConfig, load_session, manifest_hash
from .syngen import generate_corpus, load_specs
from .tokenizer import tokenize


def _say(args: argparse.Namespace, message: str) -> None:
    if not args.quiet:
        print(message)


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        cfg = PipelineConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    overrides = {}
    for attr, field in (
        ("input", "input_path"),
        ("session_dir", "session_dir"),
        ("cap", "per_host_cap"),
        ("threshold", "threshold"),
        ("match", "match"),
        ("mismatch", "mismatch"),
        ("gap", "gap"),
        ("format", "export_format"),
    ):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[field] = value
    if args.seed is not None:
        overrides["seed"] = args.seed
    return replace(cfg, **overrides)


def _state_for(session_dir: str) -> tuple[ServiceState, object]:
    session = load_session(session_dir)
    return ServiceState(session), session


def _print_families(args: argparse.Namespace, state: ServiceState, force: bool = False) -> None:
    if args.quiet and not force:
        return
    if state.fs is None:
        print("families: not initialized")
        return
    print(f"revision {state.revision}; {len(state.fs.families)} families")
    for fam in state.fs.families:
        label = fam.name or fam.id
        print(f"  {fam.id}\t{label}\tn={fam.size}\tanchor={fam.anchor}")


# ---------------------------------------------------------------- subcommands


def cmd_capture(args: argparse.Namespace) -> int:
    host, port = parse_bind(args.bind)
    banner = Path(args.banner_file).read_bytes() if args.banner_file else b""
    config = CaptureConfig(
        host=host,
        port=port,
        banner=banner,
        max_bytes=args.max_bytes,
        max_seconds=args.max_seconds,
    )
    store = SessionStore(args.out)

    async def _run() -> None:
        server = CaptureServer(config, store)
        bound = await server.start()
        _say(args, f"listening on {bound[0]}:{bound[1]}; sessions -> {args.out}")
        try:
            await asyncio.Event().wait()
        finally:
            await server.stop()
            store.close()

    try:
        asyncio.run(_run())
    except KeyboardInterrupt:
        _say(args, "capture stopped")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    records = load_sessions(args.sessions)
    logs, skipped = [], 0
    for record in records:
        try:
            logs.append(ingest_session(record))
        except EmptySession:
            skipped += 1
    corpus = dedup(sample_per_host(corpus_from_logs(logs), cap=args.cap))
    save_corpus(corpus, args.out)
    _say(
        args,
        f"ingested {len(records)} sessions -> {len(corpus.logs)} logs "
        f"({skipped} empty skipped) -> {args.out}",
    )
    return 0


def cmd_tokenize(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input)
    logs = corpus.logs
    if args.log_id is not None:
        logs = [log for log in logs if log.id == args.log_id]
        if not logs:
            return _fail(f"no log with id {args.log_id}")
    for log in logs:
        print(log.id)
        for token in tokenize(log.raw):
            print(f"  {token.byte_class.value}\t{token.render()}")
    return 0


def cmd_cluster(args: argparse.Namespace) -> int:
    config = _pipeline_config(args)
    out = run_pipeline(config)
    session = load_session(out)
    _say(
        args,
        f"session {out}: {len(session.corpus.logs)} logs, "
        f"suggested threshold {session.suggested:.6g}, "
        f"{len(session.partition.groups)} groups at {session.partition.threshold:.6g}, "
        f"manifest {manifest_hash(out)[:12]}",
    )
    return 0


def cmd_templates(args: argparse.Namespace) -> int:
    session = load_session(args.session_dir)
    tree = session.tree
    if args.node is not None:
        if not 0 <= args.node < tree.n_nodes:
            return _fail(f"node {args.node} out of range (0..{tree.n_nodes - 1})")
        template = session.templates[args.node]
        print(template.render())
        return 0
    for node in range(tree.n_leaves, tree.n_nodes):
        rendered = session.templates[node].render()
        preview = rendered if len(rendered) <= 96 else rendered[:93] + "..."
        print(f"{node}\tn={tree.node_size(node)}\t{preview!r}")
    return 0


def cmd_families(args: argparse.Namespace) -> int:
    state, session = _state_for(args.session_dir)
    action = args.action

    if action == "show":
        _print_families(args, state, force=True)
        return 0

    if action == "init":
        partition = session.partition
        if args.threshold is not None:
            partition = cut(session.tree, args.threshold)
        fs = init_families(partition, session.tree, actor=args.actor)
        state.persist(state.revision + 1, fs)
        _print_families(args, state)
        return 0

    if state.fs is None:
        return _fail("families not initialized; run `llt families <dir> init` first")
    if args.a is None:
        return _fail(f"{action} needs a family id")
    if action == "merge":
        if args.b is None:
            return _fail("merge needs two family ids")
        fs = merge_families(state.fs, session.tree, args.a, args.b, actor=args.actor)
    elif action == "split":
        fs = split_family(state.fs, session.tree, args.a, actor=args.actor)
    elif action == "rename":
        if args.name is None:
            return _fail("rename needs --name")
        fs = rename_family(state.fs, args.a, args.name, actor=args.actor)
    else:  # pragma: no cover - argparse restricts choices
        return _fail(f"unknown action {action}")
    state.persist(state.revision + 1, fs)
    _print_families(args, state)
    return 0


def cmd_syngen(args: argparse.Namespace) -> int:
    specs = load_specs(args.spec_dir)
    corpus, labels = generate_corpus(specs, per_family=args.per_family, seed=args.seed or 0)
    save_corpus(corpus, args.out)
    counts: dict[str, int] = {}
    for label in labels:
        counts[label] = counts.get(label, 0) + 1
    summary = ", ".join(f"{name}={n}" for name, n in sorted(counts.items()))
    _say(args, f"wrote {len(corpus.logs)} logs to {args.out} ({summary})")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    session_dir = args.session_dir or os.environ.get("LLT_SESSION_DIR")
    if not session_dir:
        return _fail("no session directory: pass --session-dir or set LLT_SESSION_DIR")
    bind = args.bind or os.environ.get("LLT_BIND") or DEFAULT_BIND
    host, port = parse_bind(bind)
    app = create_app(session_dir)
    import uvicorn

    _say(args, f"serving {session_dir} on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning" if args.quiet else "info")
    return 0


def cmd_export(args: argparse.Namespace) -> int:
    state, session = _state_for(args.session_dir)
    if state.fs is None:
        return _fail("families not initialized; nothing to export")
    blob = export_lineage(state.fs, session.tree, templates=session.templates, fmt=args.format)
    if args.out:
        Path(args.out).write_bytes(blob)
        _say(args, f"wrote {args.format} export to {args.out}")
    else:
        sys.stdout.write(blob.decode("utf-8"))
    return 0


# -------------------------------------------------------------------- parser


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="JSON file of pipeline settings")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="deterministic seed")
    common.add_argument(
        "--quiet", action="store_true", default=argparse.SUPPRESS, help="suppress progress output"
    )
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="llt",
        description="Intrusion-session corpus analysis: capture, cluster, template, refine.",
    )
    parser.add_argument("--config", default=None, help="JSON file of pipeline settings")
    parser.add_argument("--seed", type=int, default=None, help="deterministic seed")
    parser.add_argument("--quiet", action="store_true", default=False, help="suppress progress output")
    common = _common_flags()
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("capture", parents=[common], help="run the telnet capture listener")
    p.add_argument("--bind", default="0.0.0.0:2323", help="host:port to listen on")
    p.add_argument("--banner-file", default=None, help="file whose bytes greet each client")
    p.add_argument("--max-bytes", type=int, default=256 * 1024)
    p.add_argument("--max-seconds", type=float, default=120.0)
    p.add_argument("--out", required=True, help="session JSONL to append to")
    p.set_defaults(func=cmd_capture)

    p = sub.add_parser("ingest", parents=[common], help="session records -> request-log corpus")
    p.add_argument("--sessions", required=True, help="session JSONL from capture")
    p.add_argument("--out", required=True, help="corpus JSONL to write")
    p.add_argument("--cap", type=int, default=20, help="max logs kept per source host")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("tokenize", parents=[common], help="print token streams for inspection")
    p.add_argument("--input", required=True, help="corpus JSONL")
    p.add_argument("--log-id", default=None, help="only this log")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("cluster", parents=[common], help="run the full analysis pipeline")
    p.add_argument("--input", default=None, help="corpus JSONL")
    p.add_argument("--session-dir", default=None, help="artifact directory to write")
    p.add_argument("--cap", type=int, default=None, help="max logs kept per source host")
    p.add_argument("--threshold", type=float, default=None, help="cut height (default: suggested)")
    p.add_argument("--match", type=float, default=None)
    p.add_argument("--mismatch", type=float, default=None)
    p.add_argument("--gap", type=float, default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("templates", parents=[common], help="print extracted templates")
    p.add_argument("session_dir", help="analysis session directory")
    p.add_argument("--node", type=int, default=None, help="print one node's template")
    p.set_defaults(func=cmd_templates)

    p = sub.add_parser("families", parents=[common], help="refine the family partition")
    p.add_argument("session_dir", help="analysis session directory")
    p.add_argument(
        "action", choices=("show", "init", "merge", "split", "rename"), help="refinement action"
    )
    p.add_argument("a", nargs="?", default=None, help="family id")
    p.add_argument("b", nargs="?", default=None, help="second family id (merge)")
    p.add_argument("--name", default=None, help="new name (rename)")
    p.add_argument("--threshold", type=float, default=None, help="cut height for init")
    p.add_argument("--actor", default="cli", help="who is making the change")
    p.set_defaults(func=cmd_families)

    p = sub.add_parser("syngen", parents=[common], help="generate a synthetic labeled corpus")
    p.add_argument("--spec-dir", default=None, help="family spec directory (default: bundled)")
    p.add_argument("--per-family", type=int, default=25)
    p.add_argument("--out", required=True, help="corpus JSONL to write")
    p.set_defaults(func=cmd_syngen)

    p = sub.add_parser("serve", parents=[common], help="serve an analysis session over HTTP")
    p.add_argument("--session-dir", default=None, help="analysis session directory")
    p.add_argument("--bind", default=None, help="host:port (default env LLT_BIND or 127.0.0.1:8321)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export", parents=[common], help="export the family lineage")
    p.add_argument("session_dir", help="analysis session directory")
    p.add_argument("--format", choices=EXPORT_FORMATS, default="dot")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    p.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        return _fail(str(exc))
    except (FamilyError, ValueError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
