"""Byte-class tokenization of request logs.

Every byte belongs to exactly one of three classes: alphanumeric, symbolic
(printable punctuation and the space character), or unprintable (controls and
all bytes >= 0x80). A token is a maximal run of same-class bytes; token
boundaries fall exactly where two adjacent bytes differ in class. The
segmentation is lossless: concatenating the tokens reproduces the input.
"""

from __future__ import annotations

import enum
from typing import NamedTuple

from .encoding import escape_bytes


class ByteClass(enum.Enum):
    ALPHANUMERIC = "alphanumeric"
    SYMBOLIC = "symbolic"
    UNPRINTABLE = "unprintable"


def _build_class_table() -> tuple[ByteClass, ...]:
    table = []
    for b in range(256):
        c = chr(b)
        if ("0" <= c <= "9") or ("A" <= c <= "Z") or ("a" <= c <= "z"):
            table.append(ByteClass.ALPHANUMERIC)
        elif 0x20 <= b <= 0x2F or 0x3A <= b <= 0x40 or 0x5B <= b <= 0x60 or 0x7B <= b <= 0x7E:
            table.append(ByteClass.SYMBOLIC)
        else:
            table.append(ByteClass.UNPRINTABLE)
    return tuple(table)


CLASS_TABLE: tuple[ByteClass, ...] = _build_class_table()


class Token(NamedTuple):
    text: bytes
    byte_class: ByteClass

    def render(self) -> str:
        return escape_bytes(self.text)


TokenSeq = list  # list[Token]; alias for readability in signatures


def classify_byte(b: int) -> ByteClass:
    """Class of a single byte value (0-255). Total: never fails."""
    return CLASS_TABLE[b]


def tokenize(raw: bytes) -> list[Token]:
    """Split raw into the unique maximal same-class segmentation."""
    if not raw:
        return []
    tokens: list[Token] = []
    start = 0
    current = CLASS_TABLE[raw[0]]
    for i in range(1, len(raw)):
        cls = CLASS_TABLE[raw[i]]
        if cls is not current:
            tokens.append(Token(raw[start:i], current))
            start = i
            current = cls
    tokens.append(Token(raw[start:], current))
    return tokens


def join_tokens(tokens: list[Token]) -> bytes:
    """Concatenate token bytes; inverse of tokenize."""
    return b"".join(t.text for t in tokens)
