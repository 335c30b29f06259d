"""Length-prefixed canonical byte encoding shared by keys, warrants and packets."""

from __future__ import annotations

import struct
from typing import Iterable

_LEN = struct.Struct(">I")


class DecodeError(ValueError):
    pass


def int_to_bytes(value: int) -> bytes:
    if value < 0:
        raise ValueError("negative integers are not encodable")
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")


def bytes_to_int(data: bytes) -> int:
    return int.from_bytes(data, "big")


def encode_fields(fields: Iterable[bytes]) -> bytes:
    out = bytearray()
    for field in fields:
        out += _LEN.pack(len(field))
        out += field
    return bytes(out)


def decode_fields(data: bytes, count: int | None = None) -> list[bytes]:
    fields = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated length prefix")
        (n,) = _LEN.unpack_from(data, pos)
        pos += 4
        if pos + n > len(data):
            raise DecodeError("truncated field")
        fields.append(data[pos:pos + n])
        pos += n
    if count is not None and len(fields) != count:
        raise DecodeError(f"expected {count} fields, got {len(fields)}")
    return fields


def encode_ints(values: Iterable[int]) -> bytes:
    return encode_fields(int_to_bytes(v) for v in values)


def decode_ints(data: bytes, count: int | None = None) -> list[int]:
    return [bytes_to_int(f) for f in decode_fields(data, count)]
