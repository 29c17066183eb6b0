"""Canonical binary encoding used for hashing, signing and the chain file.

Fixed field order, big-endian fixed-width integers, u32 length prefixes on
variable-length byte strings. Map keys are sorted by their UTF-8 bytes.
"""

from __future__ import annotations

import struct

from .errors import MalformedTransaction

_U8 = struct.Struct(">B")
_U32 = struct.Struct(">I")
_U64 = struct.Struct(">Q")


class DecodeError(MalformedTransaction):
    code = "DECODE_ERROR"
    default_message = "Truncated or malformed canonical encoding."


class Writer:
    __slots__ = ("_parts",)

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, value: int) -> "Writer":
        self._parts.append(_U8.pack(value))
        return self

    def u32(self, value: int) -> "Writer":
        self._parts.append(_U32.pack(value))
        return self

    def u64(self, value: int) -> "Writer":
        if value < 0:
            raise ValueError("canonical integers are unsigned")
        self._parts.append(_U64.pack(value))
        return self

    def boolean(self, value: bool) -> "Writer":
        return self.u8(1 if value else 0)

    def fixed(self, value: bytes, size: int) -> "Writer":
        if len(value) != size:
            raise ValueError(f"expected {size} bytes, got {len(value)}")
        self._parts.append(bytes(value))
        return self

    def blob(self, value: bytes) -> "Writer":
        self._parts.append(_U32.pack(len(value)))
        self._parts.append(bytes(value))
        return self

    def text(self, value: str) -> "Writer":
        return self.blob(value.encode("utf-8"))

    def str_map(self, mapping: dict[str, str]) -> "Writer":
        # keys sorted by UTF-8 bytes so equal maps encode identically
        self.u32(len(mapping))
        for key, val in sorted(mapping.items(), key=lambda kv: kv[0].encode()):
            self.text(key)
            self.text(val)
        return self

    def optional_u64(self, value: int | None) -> "Writer":
        if value is None:
            return self.u8(0)
        return self.u8(1).u64(value)

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    __slots__ = ("_buf", "_pos")

    def __init__(self, buf: bytes) -> None:
        self._buf = memoryview(buf)
        self._pos = 0

    def _take(self, n: int) -> bytes:
        end = self._pos + n
        if n < 0 or end > len(self._buf):
            raise DecodeError()
        out = self._buf[self._pos:end].tobytes()
        self._pos = end
        return out

    def u8(self) -> int:
        return _U8.unpack(self._take(1))[0]

    def u32(self) -> int:
        return _U32.unpack(self._take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self._take(8))[0]

    def boolean(self) -> bool:
        v = self.u8()
        if v > 1:
            raise DecodeError("non-canonical boolean")
        return v == 1

    def fixed(self, size: int) -> bytes:
        return self._take(size)

    def blob(self) -> bytes:
        return self._take(self.u32())

    def text(self) -> str:
        try:
            return self.blob().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError("invalid utf-8") from exc

    def str_map(self) -> dict[str, str]:
        count = self.u32()
        if count > len(self._buf):
            raise DecodeError()
        out: dict[str, str] = {}
        previous = None
        for _ in range(count):
            key = self.text()
            if previous is not None and key.encode() <= previous:
                raise DecodeError("map keys not in canonical order")
            previous = key.encode()
            out[key] = self.text()
        return out

    def optional_u64(self) -> int | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag != 1:
            raise DecodeError("bad optional flag")
        return self.u64()

    @property
    def remaining(self) -> int:
        return len(self._buf) - self._pos

    def finish(self) -> None:
        if self.remaining:
            raise DecodeError("trailing bytes")
