import pytest
from hypothesis import given, strategies as st

from llt.encoding import escape_bytes, unescape_bytes


def test_printables_pass_through():
    assert escape_bytes(b"cd /tmp") == "cd /tmp"


def test_specific_escapes():
    assert escape_bytes(b"a\nb\rc\td\\e\x00\x7f\xff") == "a\\nb\\rc\\td\\\\e\\x00\\x7f\\xff"


def test_unescape_inverse_of_escape_examples():
    for raw in (b"", b"ls\n", b"\xff\xfe\x00", b"back\\slash", bytes(range(256))):
        assert unescape_bytes(escape_bytes(raw)) == raw


@given(st.binary(max_size=300))
def test_round_trip_property(raw):
    assert unescape_bytes(escape_bytes(raw)) == raw


@given(st.binary(max_size=300))
def test_escaped_form_is_printable_ascii(raw):
    text = escape_bytes(raw)
    assert all(0x20 <= ord(c) <= 0x7E for c in text)


def test_unescape_rejects_bad_input():
    with pytest.raises(ValueError):
        unescape_bytes("dangling\\")
    with pytest.raises(ValueError):
        unescape_bytes("\\q")
    with pytest.raises(ValueError):
        unescape_bytes("\\x0")
    with pytest.raises(ValueError):
        unescape_bytes("raw\nnewline")
