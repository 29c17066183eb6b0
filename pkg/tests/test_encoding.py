import struct

import pytest
from hypothesis import given
from hypothesis import strategies as st

from smartcert.encoding import DecodeError, Reader, Writer


def test_integer_widths_big_endian():
    assert Writer().u8(1).u32(2).u64(3).getvalue() == b"\x01" + b"\x00\x00\x00\x02" + b"\x00" * 7 + b"\x03"
    with pytest.raises(struct.error):
        Writer().u8(256)
    with pytest.raises(ValueError):
        Writer().u64(-1)


def test_map_encoding_is_order_independent():
    a = Writer().str_map({"b": "2", "a": "1"}).getvalue()
    b = Writer().str_map({"a": "1", "b": "2"}).getvalue()
    assert a == b
    assert Reader(a).str_map() == {"a": "1", "b": "2"}


def test_non_canonical_map_rejected():
    raw = Writer().u32(2).text("b").text("2").text("a").text("1").getvalue()
    with pytest.raises(DecodeError):
        Reader(raw).str_map()
    dup = Writer().u32(2).text("a").text("1").text("a").text("2").getvalue()
    with pytest.raises(DecodeError):
        Reader(dup).str_map()


def test_truncation_and_trailing_bytes():
    raw = Writer().text("hello").getvalue()
    with pytest.raises(DecodeError):
        Reader(raw[:-1]).text()
    r = Reader(raw + b"\x00")
    r.text()
    with pytest.raises(DecodeError):
        r.finish()


@given(st.dictionaries(st.text(max_size=6), st.text(max_size=6), max_size=8),
       st.one_of(st.none(), st.integers(0, 2**64 - 1)), st.binary(max_size=40))
def test_roundtrip(mapping, opt, blob):
    raw = Writer().str_map(mapping).optional_u64(opt).blob(blob).boolean(True).getvalue()
    r = Reader(raw)
    assert (r.str_map(), r.optional_u64(), r.blob(), r.boolean()) == (mapping, opt, blob, True)
    r.finish()
