"""HTTP API over an analysis session directory.

Serves the corpus, dendrogram, templates, partitions, and the family
refinement state machine.  Reads are side-effect-free; every mutation
carries the client's last-seen revision and is rejected with 409 when
stale (optimistic concurrency, single writer).  Acknowledged mutations
are appended to the on-disk family session file before the response is
sent, so a crash never loses an acknowledged action.
"""

from __future__ import annotations

import base64
import json
import os
import threading
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .clustering import cut
from .corpus import format_rfc3339
from .families import (
    REFINEMENT_CRITERIA,
    CannotSplit,
    FamilyError,
    FamilySet,
    Inconsistent,
    NotFound,
    UnsupportedFormat,
    add_lineage_edge,
    diff_templates,
    export_lineage,
    init_families,
    keep_family,
    merge_families,
    rename_family,
    split_family,
    suggest_name,
)
from .session import AnalysisSession, load_session

DEFAULT_BIND = "127.0.0.1:8321"
FAMILIES_FILE = "families.json"

_EXPORT_MEDIA = {
    "dot": "text/vnd.graphviz; charset=utf-8",
    "newick": "text/plain; charset=utf-8",
    "json": "application/json",
}


class InitBody(BaseModel):
    revision: int
    threshold: float | None = None


class MergeBody(BaseModel):
    revision: int
    a: str
    b: str


class SplitBody(BaseModel):
    revision: int
    a: str


class RenameBody(BaseModel):
    revision: int
    name: str


class KeepBody(BaseModel):
    revision: int
    note: str = ""


class EdgeBody(BaseModel):
    revision: int
    src: str
    dst: str
    changes: list[tuple[str, str]] = Field(min_length=1)


class ServiceState:
    """One analysis session plus the mutable refinement state (single writer)."""

    def __init__(self, session: AnalysisSession):
        self.session = session
        self.lock = threading.Lock()
        self.families_path = session.directory / FAMILIES_FILE
        self.revision = 0
        self.fs: FamilySet | None = None
        if self.families_path.is_file():
            try:
                data = json.loads(self.families_path.read_text(encoding="utf-8"))
                self.revision = int(data["revision"])
                self.fs = FamilySet.from_jsonable(data["familyset"])
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(
                    f"corrupt family state {self.families_path}: {exc}"
                ) from exc

    def persist(self, revision: int, fs: FamilySet) -> None:
        """Durably write the event log + snapshot, then adopt the new state."""
        payload = json.dumps(
            {"revision": revision, "familyset": fs.to_jsonable()},
            sort_keys=True,
            indent=2,
        )
        tmp = self.families_path.with_suffix(".tmp")
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, self.families_path)
        self.revision = revision
        self.fs = fs


def _family_json(state: ServiceState, fam) -> dict:
    display = fam.name or suggest_name(state.session.templates.get(fam.anchor)) or fam.id
    return {
        "id": fam.id,
        "name": fam.name,
        "display_name": display,
        "members": list(fam.members),
        "anchor": fam.anchor,
        "notes": fam.notes,
        "size": fam.size,
    }


def _families_payload(state: ServiceState) -> dict:
    fs = state.fs
    return {
        "revision": state.revision,
        "initialized": fs is not None,
        "families": [] if fs is None else [_family_json(state, f) for f in fs.families],
        "lineage_edges": [] if fs is None else [e.to_jsonable() for e in fs.lineage_edges],
        "history_len": 0 if fs is None else len(fs.history),
    }


def create_app(session_dir: str | Path | None = None) -> FastAPI:
    """Build the service over a session directory (or $LLT_SESSION_DIR)."""
    if session_dir is None:
        session_dir = os.environ.get("LLT_SESSION_DIR", "")
    if not session_dir:
        raise ValueError("no session directory: pass one or set LLT_SESSION_DIR")
    state = ServiceState(load_session(session_dir))
    session = state.session
    tree = session.tree
    app = FastAPI(title="loader-log toolkit", version="1.0")
    app.state.service = state

    def _check_node(node: int) -> None:
        if not 0 <= node < tree.n_nodes:
            raise HTTPException(404, f"no tree node {node} (0..{tree.n_nodes - 1})")

    def _mutate(revision: int, op):
        with state.lock:
            if revision != state.revision:
                raise HTTPException(
                    409,
                    f"stale revision {revision} (current {state.revision}); refetch",
                )
            try:
                new_fs = op(state.fs)
            except NotFound as exc:
                raise HTTPException(404, str(exc)) from exc
            except (CannotSplit, UnsupportedFormat, Inconsistent, FamilyError) as exc:
                raise HTTPException(400, str(exc)) from exc
            state.persist(state.revision + 1, new_fs)
            return _families_payload(state)

    def _need_families(op):
        def wrapped(fs):
            if fs is None:
                raise HTTPException(409, "families not initialized; POST /api/families/init")
            return op(fs)

        return wrapped

    @app.get("/api/corpus")
    def get_corpus() -> dict:
        return {
            "count": len(session.corpus.logs),
            "provenance": session.corpus.provenance,
            "logs": [
                {
                    "id": log.id,
                    "source_host": log.source_host,
                    "captured_at": format_rfc3339(log.captured_at),
                    "size": len(log.raw),
                }
                for log in session.corpus.logs
            ],
        }

    @app.get("/api/corpus/{log_id}")
    def get_log(log_id: str) -> dict:
        index = session.log_index.get(log_id)
        if index is None:
            raise HTTPException(404, f"no request log {log_id}")
        log = session.corpus.logs[index]
        return {
            "id": log.id,
            "leaf": index,
            "source_host": log.source_host,
            "captured_at": format_rfc3339(log.captured_at),
            "size": len(log.raw),
            "raw_b64": base64.b64encode(log.raw).decode("ascii"),
            "preview": log.raw[:200].decode("latin-1"),
        }

    @app.get("/api/dendrogram")
    def get_dendrogram(offset: int = 0, limit: int = 10_000) -> dict:
        if offset < 0 or limit < 1:
            raise HTTPException(400, "offset must be >= 0 and limit >= 1")
        merges = tree.merges[offset : offset + limit]
        return {
            "n_leaves": tree.n_leaves,
            "leaves": tree.leaves,
            "total_merges": len(tree.merges),
            "offset": offset,
            "suggested_threshold": session.suggested,
            "merges": [
                {"left": m.left, "right": m.right, "height": m.height, "size": m.size}
                for m in merges
            ],
        }

    @app.get("/api/cluster/{node}/template")
    def get_template(node: int) -> dict:
        _check_node(node)
        tpl = session.templates[node]
        return {"node": node, "slots": tpl.to_jsonable(), "rendered": tpl.render()}

    @app.get("/api/cluster/{node}/members")
    def get_members(node: int) -> dict:
        _check_node(node)
        members = tree.node_members(node)
        return {
            "node": node,
            "size": len(members),
            "members": members,
            "ids": [session.corpus.logs[m].id for m in members],
        }

    @app.get("/api/partition")
    def get_partition(threshold: float | None = None) -> dict:
        thr = session.suggested if threshold is None else threshold
        if thr < 0:
            raise HTTPException(400, "threshold must be >= 0")
        part = cut(tree, thr)
        return {
            "threshold": thr,
            "suggested": session.suggested,
            "groups": [list(g) for g in part.groups],
            "anchors": list(part.anchors),
            "labels": part.labels(tree.n_leaves),
        }

    @app.get("/api/diff")
    def get_diff(a: int, b: int) -> dict:
        _check_node(a)
        _check_node(b)
        changes = diff_templates(session.templates[a], session.templates[b])
        return {
            "a": a,
            "b": b,
            "changes": [{**c.to_jsonable(), "label": c.label} for c in changes],
        }

    @app.get("/api/criteria")
    def get_criteria() -> dict:
        return {"criteria": list(REFINEMENT_CRITERIA)}

    @app.get("/api/families")
    def get_families() -> dict:
        with state.lock:
            return _families_payload(state)

    @app.post("/api/families/init")
    def post_init(body: InitBody) -> dict:
        def op(_fs):
            if body.threshold is None:
                part = session.partition
            else:
                if body.threshold < 0:
                    raise FamilyError("threshold must be >= 0")
                part = cut(tree, body.threshold)
            return init_families(part, tree, actor="api")

        return _mutate(body.revision, op)

    @app.post("/api/families/merge")
    def post_merge(body: MergeBody) -> dict:
        return _mutate(
            body.revision,
            _need_families(lambda fs: merge_families(fs, tree, body.a, body.b, actor="api")),
        )

    @app.post("/api/families/split")
    def post_split(body: SplitBody) -> dict:
        return _mutate(
            body.revision,
            _need_families(lambda fs: split_family(fs, tree, body.a, actor="api")),
        )

    @app.post("/api/families/{fid}/rename")
    def post_rename(fid: str, body: RenameBody) -> dict:
        return _mutate(
            body.revision,
            _need_families(lambda fs: rename_family(fs, fid, body.name, actor="api")),
        )

    @app.post("/api/families/{fid}/keep")
    def post_keep(fid: str, body: KeepBody) -> dict:
        return _mutate(
            body.revision,
            _need_families(lambda fs: keep_family(fs, fid, note=body.note, actor="api")),
        )

    @app.post("/api/lineage/edge")
    def post_edge(body: EdgeBody) -> dict:
        return _mutate(
            body.revision,
            _need_families(
                lambda fs: add_lineage_edge(fs, body.src, body.dst, body.changes, actor="api")
            ),
        )

    @app.get("/api/export")
    def get_export(format: str = "json") -> Response:
        with state.lock:
            fs = state.fs
            if fs is None:
                raise HTTPException(409, "families not initialized; POST /api/families/init")
            try:
                blob = export_lineage(fs, tree, session.templates, format)
            except UnsupportedFormat as exc:
                raise HTTPException(400, str(exc)) from exc
        return Response(content=blob, media_type=_EXPORT_MEDIA[format])

    return app


def parse_bind(bind: str) -> tuple[str, int]:
    """Split "host:port" (the LLT_BIND format) into uvicorn arguments."""
    host, _, port = bind.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bind must look like host:port, got {bind!r}")
    return host, int(port)
