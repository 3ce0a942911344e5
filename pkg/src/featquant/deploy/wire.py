"""Bit-exact packed frame for n-bit feature codes.

Layout (little-endian)::

    magic   4 bytes  b"BWSQ"
    version 1 byte
    K       2 bytes  feature count
    n       1 byte   bits per code
    payload ceil(K * n / 8) bytes, codes packed LSB-first in feature order

Unused high bits of the final payload byte are zero.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

MAGIC = b"BWSQ"
VERSION = 1
HEADER = struct.Struct("<4sBHB")
HEADER_SIZE = HEADER.size


class FrameError(ValueError):
    pass


class BadMagicError(FrameError):
    pass


class UnsupportedVersionError(FrameError):
    pass


class FrameLengthError(FrameError):
    pass


class TrailingBitsError(FrameError):
    pass


class CodeRangeError(ValueError):
    def __init__(self, index: int, code: int, bits: int):
        super().__init__(f"code {code} at index {index} does not fit in {bits} bits")
        self.index = index


def payload_size(k: int, bits: int) -> int:
    return (k * bits + 7) // 8


@dataclass(frozen=True)
class PackedFrame:
    k: int
    bits: int
    payload: bytes
    version: int = VERSION

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValueError(f"bits must be in 1..8, got {self.bits}")
        if not 0 <= self.k < 1 << 16:
            raise ValueError("feature count must fit in 16 bits")
        if len(self.payload) != payload_size(self.k, self.bits):
            raise FrameLengthError(
                f"payload is {len(self.payload)} bytes, expected {payload_size(self.k, self.bits)}")

    def to_bytes(self) -> bytes:
        return HEADER.pack(MAGIC, self.version, self.k, self.bits) + self.payload

    def __len__(self) -> int:
        return HEADER_SIZE + len(self.payload)

    @classmethod
    def from_bytes(cls, data: bytes) -> "PackedFrame":
        data = bytes(data)
        if len(data) < HEADER_SIZE:
            if not MAGIC.startswith(data[:4]):
                raise BadMagicError(f"bad magic {data[:4]!r}")
            raise FrameLengthError(f"frame of {len(data)} bytes is shorter than the header")
        magic, version, k, bits = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported frame version {version}")
        if not 1 <= bits <= 8:
            raise FrameError(f"invalid bit width {bits}")
        expected = payload_size(k, bits)
        payload = data[HEADER_SIZE:]
        if len(payload) != expected:
            raise FrameLengthError(f"payload is {len(payload)} bytes, expected {expected}")
        used = k * bits
        if used % 8 and payload[-1] >> (used % 8):
            raise TrailingBitsError("unused trailing bits are not zero")
        return cls(k, bits, payload, version)


def pack(codes, bits: int) -> PackedFrame:
    codes = [int(c) for c in codes]
    limit = 1 << bits
    acc = 0
    for i, c in enumerate(codes):
        if not 0 <= c < limit:
            raise CodeRangeError(i, c, bits)
        acc |= c << (i * bits)
    k = len(codes)
    return PackedFrame(k, bits, acc.to_bytes(payload_size(k, bits), "little"))


def unpack(frame) -> list[int]:
    if not isinstance(frame, PackedFrame):
        frame = PackedFrame.from_bytes(frame)
    acc = int.from_bytes(frame.payload, "little")
    mask = (1 << frame.bits) - 1
    return [(acc >> (i * frame.bits)) & mask for i in range(frame.k)]
