"""Reversible text rendering of raw byte strings.

Artifacts (vocab dumps, templates, debug output) need byte strings in JSON
and on terminals. Printable ASCII passes through; everything else becomes a
backslash escape. The mapping is bijective so files round-trip exactly.
"""

from __future__ import annotations

_SIMPLE = {0x5C: "\\\\", 0x0A: "\\n", 0x0D: "\\r", 0x09: "\\t"}
_UNSIMPLE = {"\\": 0x5C, "n": 0x0A, "r": 0x0D, "t": 0x09}


def escape_bytes(data: bytes) -> str:
    """Render bytes as ASCII text: printable chars verbatim, rest escaped."""
    out: list[str] = []
    for b in data:
        if b in _SIMPLE:
            out.append(_SIMPLE[b])
        elif 0x20 <= b <= 0x7E:
            out.append(chr(b))
        else:
            out.append(f"\\x{b:02x}")
    return "".join(out)


def unescape_bytes(text: str) -> bytes:
    """Inverse of escape_bytes."""
    out = bytearray()
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c != "\\":
            code = ord(c)
            if not 0x20 <= code <= 0x7E:
                raise ValueError(f"unescaped non-printable character at index {i}")
            out.append(code)
            i += 1
            continue
        if i + 1 >= n:
            raise ValueError("dangling backslash")
        nxt = text[i + 1]
        if nxt in _UNSIMPLE:
            out.append(_UNSIMPLE[nxt])
            i += 2
        elif nxt == "x":
            if i + 3 >= n:
                raise ValueError("truncated \\x escape")
            out.append(int(text[i + 2 : i + 4], 16))
            i += 4
        else:
            raise ValueError(f"unknown escape \\{nxt}")
    return bytes(out)
