"""Request-log corpus: ingest, normalize, deduplicate, sample, persist.

A RequestLog is one telnet session's client-to-server payload bytes,
concatenated in arrival order — server responses contribute nothing. The
corpus file is line-delimited JSON with base64 raw bytes so arbitrary binary
survives the trip.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable


class EmptySession(Exception):
    """Session contained no client payload bytes."""


def log_id(raw: bytes) -> str:
    """Stable content id: sha256 of the raw bytes, lowercase hex."""
    return hashlib.sha256(raw).hexdigest()


def format_rfc3339(ts: datetime) -> str:
    """UTC timestamp with explicit offset, second precision kept as given."""
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).isoformat()


def parse_rfc3339(text: str) -> datetime:
    """Accepts both 'Z' and numeric offsets; naive values are taken as UTC."""
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


@dataclass(frozen=True)
class RequestLog:
    id: str
    source_host: str
    captured_at: datetime
    raw: bytes

    @classmethod
    def make(cls, raw: bytes, source_host: str, captured_at: datetime) -> "RequestLog":
        return cls(id=log_id(raw), source_host=source_host, captured_at=captured_at, raw=raw)


@dataclass
class Corpus:
    logs: list[RequestLog] = field(default_factory=list)
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.logs)

    def __iter__(self):
        return iter(self.logs)


def ingest_session(session) -> RequestLog:
    """Collapse a capture SessionRecord into a RequestLog.

    Only client-direction chunks contribute bytes; a session with no client
    payload raises EmptySession (callers decide whether that is fatal).
    """
    raw = b"".join(payload for direction, payload in session.chunks if direction == "client")
    if not raw:
        raise EmptySession(f"no client payload from {session.peer}")
    return RequestLog.make(raw=raw, source_host=session.peer, captured_at=session.started_at)


def dedup(corpus: Corpus) -> Corpus:
    """One representative per distinct raw; first occurrence wins, order kept."""
    seen: set[str] = set()
    kept: list[RequestLog] = []
    for log in corpus.logs:
        if log.id in seen:
            continue
        seen.add(log.id)
        kept.append(log)
    return Corpus(logs=kept, provenance=corpus.provenance)


def sample_per_host(corpus: Corpus, cap: int = 20) -> Corpus:
    """Keep at most `cap` logs per source_host (first in corpus order)."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    counts: dict[str, int] = {}
    kept: list[RequestLog] = []
    for log in corpus.logs:
        n = counts.get(log.source_host, 0)
        if n < cap:
            counts[log.source_host] = n + 1
            kept.append(log)
    return Corpus(logs=kept, provenance=corpus.provenance)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """One JSON record per line: {id, source_host, captured_at, raw_b64}."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for log in corpus.logs:
            record = {
                "id": log.id,
                "source_host": log.source_host,
                "captured_at": format_rfc3339(log.captured_at),
                "raw_b64": base64.b64encode(log.raw).decode("ascii"),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    """Read the line format back; unknown fields are ignored."""
    path = Path(path)
    logs: list[RequestLog] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                raw = base64.b64decode(record["raw_b64"])
                logs.append(
                    RequestLog(
                        id=record.get("id") or log_id(raw),
                        source_host=record["source_host"],
                        captured_at=parse_rfc3339(record["captured_at"]),
                        raw=raw,
                    )
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus record: {exc}") from exc
    return Corpus(logs=logs)


def corpus_from_logs(logs: Iterable[RequestLog], provenance: str = "") -> Corpus:
    return Corpus(logs=list(logs), provenance=provenance)
