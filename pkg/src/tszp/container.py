"""The ``.tszp`` file: a fixed little-endian header followed by seven sections.

Header layout (84 bytes)::

    magic       4s   b"TSZP"
    version     u16  1
    flags       u16  bit 0 set when sections 6-7 (topology) are present
    nx, ny      u32  grid dimensions
    eps         f64  effective absolute error bound
    block_size  u32  codec block length
    lengths     7 x u64 byte length of each section

Sections, in order: constant-block bitmap, block widths, sign bits, block
first values, packed payload, 2-bit class map, encoded rank metadata.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Tuple

from .codec import SECTION_NAMES, EncodedSections
from .errors import (
    BadMagicError,
    CorruptStreamError,
    TruncatedStreamError,
    UnsupportedVersionError,
)

MAGIC = b"TSZP"
VERSION = 1
FLAG_TOPOLOGY = 0x1
HEADER = struct.Struct("<4sHHIIdI7Q")
HEADER_SIZE = HEADER.size

SECTION_LABELS = SECTION_NAMES + ("critical_point_map", "rank_metadata")


@dataclass(frozen=True)
class CompressedStream:
    nx: int
    ny: int
    eps: float
    block_size: int
    sections: Tuple[bytes, ...]
    flags: int = 0
    version: int = VERSION

    def __post_init__(self):
        if len(self.sections) != 7:
            raise ValueError("a stream has exactly seven sections")
        object.__setattr__(self, "sections", tuple(bytes(s) for s in self.sections))

    @property
    def topology(self) -> bool:
        return bool(self.flags & FLAG_TOPOLOGY)

    @property
    def main(self) -> EncodedSections:
        return EncodedSections(*self.sections[:5])

    @property
    def cp_map_bytes(self) -> bytes:
        return self.sections[5]

    @property
    def rank_sections(self) -> EncodedSections:
        return _split_ranks(self.sections[6])

    @property
    def nbytes(self) -> int:
        return HEADER_SIZE + sum(len(s) for s in self.sections)

    def to_bytes(self) -> bytes:
        head = HEADER.pack(
            MAGIC, self.version, self.flags, self.nx, self.ny, self.eps,
            self.block_size, *(len(s) for s in self.sections),
        )
        return head + b"".join(self.sections)

    @classmethod
    def from_bytes(cls, data: bytes) -> "CompressedStream":
        data = bytes(data)
        if len(data) < 4 or data[:4] != MAGIC:
            raise BadMagicError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
        if len(data) < HEADER_SIZE:
            raise TruncatedStreamError(f"header truncated: {len(data)} of {HEADER_SIZE} bytes")
        magic, version, flags, nx, ny, eps, block_size, *lengths = HEADER.unpack_from(data)
        if version != VERSION:
            raise UnsupportedVersionError(f"unsupported format version {version}")
        if flags & ~FLAG_TOPOLOGY:
            raise CorruptStreamError(f"unknown flag bits 0x{flags:04x}")
        if nx < 1 or ny < 1:
            raise CorruptStreamError(f"invalid dimensions {nx}x{ny}")
        if not (math.isfinite(eps) and eps > 0):
            raise CorruptStreamError(f"invalid error bound {eps!r}")
        if block_size < 2:
            raise CorruptStreamError(f"invalid block size {block_size}")
        declared = HEADER_SIZE + sum(lengths)
        if declared > len(data):
            raise TruncatedStreamError(
                f"sections declare {declared} bytes but the stream holds {len(data)}"
            )
        if declared < len(data):
            raise CorruptStreamError(f"{len(data) - declared} trailing bytes after the last section")
        map_len = -(-(nx * ny) // 4)
        if flags & FLAG_TOPOLOGY:
            if lengths[5] != map_len:
                raise CorruptStreamError(
                    f"class map section is {lengths[5]} bytes, expected {map_len}"
                )
        elif lengths[5] or lengths[6]:
            raise CorruptStreamError("topology sections present but topology flag clear")
        sections = []
        off = HEADER_SIZE
        for n in lengths:
            sections.append(data[off:off + n])
            off += n
        stream = cls(nx, ny, eps, block_size, tuple(sections), flags, version)
        if flags & FLAG_TOPOLOGY:
            stream.rank_sections  # validates the nested layout
        return stream


# The rank metadata is itself a five-part codec encoding; inside the rank section it is
# stored as five u32 lengths followed by the parts.
_RANK_HEAD = struct.Struct("<5I")


def join_ranks(sec: EncodedSections) -> bytes:
    parts = sec.as_tuple()
    if not any(parts):
        return b""
    return _RANK_HEAD.pack(*(len(p) for p in parts)) + b"".join(parts)


def _split_ranks(data: bytes) -> EncodedSections:
    if not data:
        return EncodedSections()
    if len(data) < _RANK_HEAD.size:
        raise TruncatedStreamError("rank metadata section shorter than its length table")
    lengths = _RANK_HEAD.unpack_from(data)
    if _RANK_HEAD.size + sum(lengths) != len(data):
        raise CorruptStreamError("rank metadata length table does not match section size")
    parts = []
    off = _RANK_HEAD.size
    for n in lengths:
        parts.append(data[off:off + n])
        off += n
    return EncodedSections(*parts)


def write_stream(stream: CompressedStream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(stream.to_bytes())


def read_stream(path) -> CompressedStream:
    with open(path, "rb") as fh:
        return CompressedStream.from_bytes(fh.read())


def stream_stats(stream: CompressedStream) -> dict:
    """Sizes, compression ratio and bit rate (bits per binary32 sample)."""
    compressed = stream.nbytes
    original = 4 * stream.nx * stream.ny
    ratio = original / compressed
    breakdown = {"header": HEADER_SIZE}
    breakdown.update({name: len(s) for name, s in zip(SECTION_LABELS, stream.sections)})
    return {
        "compressed_bytes": compressed,
        "original_bytes": original,
        "compression_ratio": ratio,
        "bit_rate": 32.0 / ratio,
        "sections": breakdown,
    }
