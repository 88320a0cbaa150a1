"""Byte-exact serialization helpers shared by every wire format."""

from __future__ import annotations

_MAX_VARINT_BYTES = 10  # caps values at 70 bits; all varint fields fit in 64


def encode_varint(value: int) -> bytes:
    """Encode a non-negative integer as unsigned LEB128."""
    if value < 0:
        raise ValueError("varint value must be non-negative")
    out = bytearray()
    while True:
        part = value & 0x7F
        value >>= 7
        if value:
            out.append(part | 0x80)
        else:
            out.append(part)
            return bytes(out)


def decode_varint(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode an unsigned LEB128 varint; returns (value, next offset)."""
    value = 0
    shift = 0
    pos = offset
    while True:
        if pos >= len(data):
            raise ValueError("truncated varint")
        if pos - offset >= _MAX_VARINT_BYTES:
            raise ValueError("varint too long")
        byte = data[pos]
        pos += 1
        value |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return value, pos
        shift += 7


def take_bytes(data: bytes, offset: int, count: int) -> tuple[bytes, int]:
    if offset + count > len(data):
        raise ValueError("truncated field")
    return data[offset:offset + count], offset + count


def expect_magic(data: bytes, magic: bytes, offset: int = 0) -> int:
    got, pos = take_bytes(data, offset, len(magic))
    if got != magic:
        raise ValueError(f"bad magic {got!r}, expected {magic!r}")
    return pos


def pack_bits(value: int, nbits: int) -> bytes:
    """Pack a width-nbits integer into bytes, first bit in the high bit of
    the first byte; unused low bits of the last byte are zero."""
    if nbits < 0:
        raise ValueError("negative bit width")
    if value < 0 or (nbits < value.bit_length()):
        raise ValueError("value out of range for bit width")
    nbytes = (nbits + 7) // 8
    return (value << (8 * nbytes - nbits)).to_bytes(nbytes, "big")


def unpack_bits(data: bytes, nbits: int) -> int:
    """Inverse of pack_bits; rejects nonzero padding."""
    nbytes = (nbits + 7) // 8
    if len(data) != nbytes:
        raise ValueError("bit payload has wrong byte length")
    pad = 8 * nbytes - nbits
    raw = int.from_bytes(data, "big")
    if pad and raw & ((1 << pad) - 1):
        raise ValueError("nonzero padding bits")
    return raw >> pad


def canonical_tuple(*parts: bytes) -> bytes:
    """Flat, unambiguous encoding of a tuple of byte strings: each component
    is prefixed with its varint length. Decoders condition on tuples of
    values; this is the one encoding used everywhere for that."""
    out = bytearray()
    for part in parts:
        out += encode_varint(len(part))
        out += part
    return bytes(out)


def split_canonical_tuple(data: bytes) -> list[bytes]:
    """Inverse of canonical_tuple; raises ValueError unless data parses exactly."""
    parts = []
    pos = 0
    while pos < len(data):
        n, pos = decode_varint(data, pos)
        chunk, pos = take_bytes(data, pos, n)
        parts.append(chunk)
    return parts
