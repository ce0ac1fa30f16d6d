"""Minimal telnet capture endpoint and replay client.

The listener walks a connecting client through a two-prompt login (recording
whatever credentials arrive and accepting them unconditionally), then records
every subsequent payload chunk until disconnect or a session limit. Telnet
IAC control sequences are stripped on the way in; an escaped data byte
(IAC IAC) is preserved as a single 0xFF. Server responses are canned and
exist only to keep clients talking — the analysis pipeline discards them.
"""

from __future__ import annotations

import asyncio
import base64
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from .corpus import format_rfc3339, parse_rfc3339

# Telnet protocol bytes (RFC 854)
IAC = 0xFF
DONT = 0xFE
DO = 0xFD
WONT = 0xFC
WILL = 0xFB
SB = 0xFA
SE = 0xF0

_MAX_LOGIN_LINE = 4096


class TruncatedControl(Exception):
    """Stream ended in the middle of an IAC control sequence.

    `consumed` carries the cleaned data bytes produced before the cut.
    """

    def __init__(self, consumed: bytes):
        super().__init__("stream truncated inside a telnet control sequence")
        self.consumed = consumed


class TelnetControlFilter:
    """Streaming IAC stripper; partial sequences may span feed() calls."""

    _DATA, _IAC, _OPT, _SUB, _SUB_IAC = range(5)

    def __init__(self) -> None:
        self._state = self._DATA

    def feed(self, data: bytes) -> bytes:
        out = bytearray()
        state = self._state
        for b in data:
            if state == self._DATA:
                if b == IAC:
                    state = self._IAC
                else:
                    out.append(b)
            elif state == self._IAC:
                if b == IAC:  # escaped data byte
                    out.append(IAC)
                    state = self._DATA
                elif b in (WILL, WONT, DO, DONT):
                    state = self._OPT
                elif b == SB:
                    state = self._SUB
                else:  # two-byte command (NOP, AYT, ...)
                    state = self._DATA
            elif state == self._OPT:  # option byte of WILL/WONT/DO/DONT
                state = self._DATA
            elif state == self._SUB:
                if b == IAC:
                    state = self._SUB_IAC
                # else: subnegotiation payload, dropped
            else:  # _SUB_IAC
                if b == SE:
                    state = self._DATA
                else:
                    # IAC IAC inside subnegotiation escapes a data byte that
                    # still belongs to the dropped subnegotiation; anything
                    # else is tolerated leniently.
                    state = self._SUB
        self._state = state
        return bytes(out)

    @property
    def pending(self) -> bool:
        """True while inside an unfinished control sequence."""
        return self._state != self._DATA


def strip_telnet_controls(stream: bytes) -> bytes:
    """Strip IAC sequences from a complete stream.

    Raises TruncatedControl (carrying the bytes cleaned so far) if the stream
    ends mid-sequence.
    """
    filt = TelnetControlFilter()
    cleaned = filt.feed(stream)
    if filt.pending:
        raise TruncatedControl(cleaned)
    return cleaned


@dataclass
class SessionRecord:
    peer: str
    started_at: datetime
    chunks: list[tuple[str, bytes]] = field(default_factory=list)
    credentials_seen: tuple[str, str] | None = None
    truncated: bool = False

    def client_bytes(self) -> bytes:
        return b"".join(p for d, p in self.chunks if d == "client")


@dataclass
class CaptureConfig:
    host: str = "0.0.0.0"
    port: int = 2323
    banner: bytes = b""
    login_prompt: bytes = b"login: "
    password_prompt: bytes = b"Password: "
    shell_prompt: bytes = b"# "
    max_bytes: int = 256 * 1024
    max_seconds: float = 120.0
    # canned responses keyed by the stripped command line (sans CR/LF);
    # the shell prompt is appended to whatever this yields (default: nothing),
    # so clients always get a read cue after each request.
    responses: dict[bytes, bytes] = field(default_factory=dict)


def session_to_dict(record: SessionRecord) -> dict:
    return {
        "peer": record.peer,
        "started_at": format_rfc3339(record.started_at),
        "credentials": list(record.credentials_seen) if record.credentials_seen else None,
        "truncated": record.truncated,
        "chunks": [[d, base64.b64encode(p).decode("ascii")] for d, p in record.chunks],
    }


def session_from_dict(data: dict) -> SessionRecord:
    creds = data.get("credentials")
    return SessionRecord(
        peer=data["peer"],
        started_at=parse_rfc3339(data["started_at"]),
        chunks=[(d, base64.b64decode(p)) for d, p in data["chunks"]],
        credentials_seen=tuple(creds) if creds else None,
        truncated=bool(data.get("truncated", False)),
    )


class SessionStore:
    """Append-only JSONL store; every record is fsynced before append returns."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = self.path.open("ab")

    def append(self, record: SessionRecord) -> None:
        line = json.dumps(session_to_dict(record), sort_keys=True) + "\n"
        self._fh.write(line.encode("utf-8"))
        self._fh.flush()
        os.fsync(self._fh.fileno())

    def close(self) -> None:
        self._fh.close()


def load_sessions(path: str | Path) -> list[SessionRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(session_from_dict(json.loads(line)))
    return records


class CaptureServer:
    """Asyncio telnet listener; one SessionRecord per accepted connection."""

    def __init__(self, config: CaptureConfig | None = None, store: SessionStore | None = None):
        self.config = config or CaptureConfig()
        self.store = store
        self.records: list[SessionRecord] = []
        self._server: asyncio.base_events.Server | None = None
        self._record_added = asyncio.Event()

    async def start(self) -> tuple[str, int]:
        self._server = await asyncio.start_server(self._handle, self.config.host, self.config.port)
        return self.address

    @property
    def address(self) -> tuple[str, int]:
        if self._server is None:
            raise RuntimeError("server not started")
        sock = self._server.sockets[0]
        host, port = sock.getsockname()[:2]
        return host, port

    async def stop(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
            self._server = None

    async def wait_for_record(self, peer: str, timeout: float = 10.0) -> SessionRecord:
        """Return the record for `peer`, waiting for the session to finish."""
        deadline = asyncio.get_running_loop().time() + timeout
        while True:
            for record in self.records:
                if record.peer == peer:
                    return record
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                raise TimeoutError(f"no session record for {peer}")
            self._record_added.clear()
            try:
                await asyncio.wait_for(self._record_added.wait(), remaining)
            except asyncio.TimeoutError:
                pass

    def _finalize(self, record: SessionRecord) -> None:
        if self.store is not None:
            self.store.append(record)  # durable before the session is dropped
        self.records.append(record)
        self._record_added.set()

    async def _read_cleaned(self, reader, filt, deadline) -> bytes:
        """One cleaned, possibly empty chunk; b'' only on EOF/expiry."""
        while True:
            remaining = deadline - asyncio.get_running_loop().time()
            if remaining <= 0:
                return b""
            try:
                data = await asyncio.wait_for(reader.read(4096), remaining)
            except asyncio.TimeoutError:
                return b""
            if not data:
                return b""
            cleaned = filt.feed(data)
            if cleaned:
                return cleaned
            # pure control traffic; keep reading

    async def _read_line(self, reader, filt, deadline) -> bytes | None:
        """Cleaned bytes up to and including LF; None on EOF/expiry."""
        buf = bytearray()
        while b"\n" not in buf:
            chunk = await self._read_cleaned(reader, filt, deadline)
            if not chunk:
                return None
            buf.extend(chunk)
            if len(buf) > _MAX_LOGIN_LINE:
                return None
        return bytes(buf)

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer_info = writer.get_extra_info("peername")
        peer = f"{peer_info[0]}:{peer_info[1]}" if peer_info else "unknown"
        record = SessionRecord(peer=peer, started_at=datetime.now(timezone.utc))
        filt = TelnetControlFilter()
        cfg = self.config
        deadline = asyncio.get_running_loop().time() + cfg.max_seconds
        try:
            writer.write(cfg.banner + cfg.login_prompt)
            await writer.drain()
            username = await self._read_line(reader, filt, deadline)
            if username is not None:
                writer.write(cfg.password_prompt)
                await writer.drain()
                password = await self._read_line(reader, filt, deadline)
                if password is not None:
                    record.credentials_seen = (
                        username.rstrip(b"\r\n").decode("latin-1"),
                        password.rstrip(b"\r\n").decode("latin-1"),
                    )
                    writer.write(cfg.shell_prompt)
                    await writer.drain()
                    await self._shell_loop(reader, writer, filt, record, deadline)
        except (ConnectionError, OSError):
            pass  # record whatever was captured before the I/O error
        finally:
            self._finalize(record)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass

    async def _shell_loop(self, reader, writer, filt, record, deadline) -> None:
        cfg = self.config
        budget = cfg.max_bytes
        while True:
            chunk = await self._read_cleaned(reader, filt, deadline)
            if not chunk:
                return
            if len(chunk) > budget:
                record.chunks.append(("client", chunk[:budget]))
                record.truncated = True
                return
            budget -= len(chunk)
            record.chunks.append(("client", chunk))
            if budget == 0:
                # limit reached exactly; stop recording rather than risk overrun
                record.truncated = True
                return
            response = cfg.responses.get(chunk.rstrip(b"\r\n"), b"") + cfg.shell_prompt
            record.chunks.append(("server", response))
            writer.write(response)
            await writer.drain()


async def run_listener(config: CaptureConfig, store: SessionStore | None = None) -> CaptureServer:
    """Start a listener; records accumulate on the returned server object."""
    server = CaptureServer(config, store)
    await server.start()
    return server


async def _read_until(reader, marker: bytes, timeout: float) -> bytes:
    buf = bytearray()
    loop = asyncio.get_running_loop()
    deadline = loop.time() + timeout
    while marker not in buf:
        remaining = deadline - loop.time()
        if remaining <= 0:
            raise TimeoutError(f"marker {marker!r} not seen (got {bytes(buf)!r})")
        data = await asyncio.wait_for(reader.read(4096), remaining)
        if not data:
            raise ConnectionError(f"connection closed waiting for {marker!r}")
        buf.extend(data)
    return bytes(buf)


async def replay_script(
    script: Sequence[bytes],
    endpoint: CaptureServer,
    *,
    credentials: tuple[str, str] = ("root", "admin"),
    timeout: float = 10.0,
) -> SessionRecord:
    """Drive a scripted session against an in-process listener.

    Sends each script line verbatim (lines may contain IAC sequences) and
    waits for the server's prompt between lines so chunk boundaries survive
    TCP coalescing. Returns the listener-side record for this connection.
    """
    host, port = endpoint.address
    cfg = endpoint.config
    reader, writer = await asyncio.open_connection(host, port)
    try:
        sockname = writer.get_extra_info("sockname")
        self_peer = f"{sockname[0]}:{sockname[1]}"
        await _read_until(reader, cfg.login_prompt, timeout)
        writer.write(credentials[0].encode("latin-1") + b"\n")
        await writer.drain()
        await _read_until(reader, cfg.password_prompt, timeout)
        writer.write(credentials[1].encode("latin-1") + b"\n")
        await writer.drain()
        await _read_until(reader, cfg.shell_prompt, timeout)
        for line in script:
            writer.write(line)
            await writer.drain()
            await _read_until(reader, cfg.shell_prompt, timeout)
    finally:
        writer.close()
        try:
            await writer.wait_closed()
        except (ConnectionError, OSError):
            pass
    return await endpoint.wait_for_record(self_peer, timeout)
