"""Lossless block codec for signed 32-bit integer streams.

The stream is cut into consecutive blocks of ``block_size`` values.  Each
block stores its first value verbatim and the deltas between consecutive
values; a block whose deltas are all zero is flagged constant and costs one
bitmap bit plus its first value.  Non-constant blocks store one width byte
(the bit length of the largest delta magnitude), one sign bit per delta and
the magnitudes packed at that width.  All bit streams are MSB-first with the
final byte zero-padded.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .errors import CorruptStreamError, ValidationError
from .parallel import run_chunks

SECTION_NAMES = ("constant_bitmap", "widths", "sign_bits", "firsts", "payload")

# blocks per worker chunk; keeps the per-chunk bit matrices small
BLOCKS_PER_CHUNK = 4096

_INT32_MIN = -(2**31)
_INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class EncodedSections:
    constant_bitmap: bytes = b""
    widths: bytes = b""
    sign_bits: bytes = b""
    firsts: bytes = b""
    payload: bytes = b""

    @property
    def nbytes(self) -> int:
        return sum(len(getattr(self, f.name)) for f in fields(self))

    def as_tuple(self):
        return tuple(getattr(self, name) for name in SECTION_NAMES)

    def sizes(self) -> dict:
        return {name: len(getattr(self, name)) for name in SECTION_NAMES}


def _bit_length(mag: np.ndarray) -> np.ndarray:
    # frexp is exact for integers below 2**53
    return np.frexp(mag.astype(np.float64))[1].astype(np.int64)


def _width_mask(widths: np.ndarray) -> np.ndarray:
    """Boolean ``(n, 32)`` mask selecting the low ``w`` bits of each row, MSB-first."""
    return np.arange(32)[None, :] >= (32 - widths)[:, None]


def _encode_chunk(blocks: np.ndarray, counts: np.ndarray):
    """Encode ``blocks`` (nb, bs) where row ``i`` holds ``counts[i]`` real values."""
    deltas = np.diff(blocks, axis=1)
    valid = np.arange(blocks.shape[1] - 1)[None, :] < (counts - 1)[:, None]
    mag = np.where(valid, np.abs(deltas), 0)
    widths = _bit_length(mag.max(axis=1)) if mag.shape[1] else np.zeros(len(blocks), np.int64)
    constant = widths == 0

    live = ~constant
    sel = valid[live]
    signs = (deltas[live] < 0)[sel]
    m = mag[live][sel].astype(">u4")
    w = np.broadcast_to(widths[live][:, None], sel.shape)[sel]
    bits = np.unpackbits(m.view(np.uint8).reshape(-1, 4), axis=1)
    payload = bits[_width_mask(w)]
    return constant, widths[live].astype(np.uint8), signs.astype(np.uint8), payload


def encode_indices(indices, block_size: int = 32, threads=1) -> EncodedSections:
    """Encode a sequence of signed 32-bit integers; see the module docstring."""
    if block_size < 2:
        raise ValidationError(f"block_size must be >= 2, got {block_size}")
    idx = np.asarray(indices, dtype=np.int64).ravel()
    n = idx.size
    if n == 0:
        return EncodedSections()
    if idx.min() < _INT32_MIN or idx.max() > _INT32_MAX:
        raise ValidationError("indices must fit in signed 32 bits")
    nb = -(-n // block_size)
    bw = min(block_size, n)
    padded = np.empty(nb * bw, dtype=np.int64)
    padded[:n] = idx
    padded[n:] = idx[-1]
    blocks = padded.reshape(nb, bw)
    counts = np.full(nb, block_size, dtype=np.int64)
    counts[-1] = n - (nb - 1) * block_size

    chunks = [(s, min(s + BLOCKS_PER_CHUNK, nb)) for s in range(0, nb, BLOCKS_PER_CHUNK)]
    parts = run_chunks(lambda c: _encode_chunk(blocks[c[0]:c[1]], counts[c[0]:c[1]]), chunks, threads)

    constant = np.concatenate([p[0] for p in parts])
    widths = np.concatenate([p[1] for p in parts])
    signs = np.concatenate([p[2] for p in parts])
    payload = np.concatenate([p[3] for p in parts])
    return EncodedSections(
        constant_bitmap=np.packbits(constant.astype(np.uint8)).tobytes(),
        widths=widths.tobytes(),
        sign_bits=np.packbits(signs).tobytes(),
        firsts=blocks[:, 0].astype("<i4").tobytes(),
        payload=np.packbits(payload).tobytes(),
    )


def decode_indices(sections: EncodedSections, total_count: int, block_size: int = 32, threads=1) -> np.ndarray:
    """Exact inverse of :func:`encode_indices`; returns an int64 array."""
    if block_size < 2:
        raise CorruptStreamError(f"block_size must be >= 2, got {block_size}")
    if total_count < 0:
        raise CorruptStreamError(f"negative element count {total_count}")
    if total_count == 0:
        if sections.nbytes:
            raise CorruptStreamError("sections are non-empty for an empty sequence")
        return np.zeros(0, dtype=np.int64)
    nb = -(-total_count // block_size)
    _expect(sections.constant_bitmap, -(-nb // 8), "constant bitmap")
    _expect(sections.firsts, 4 * nb, "block first values")

    constant = np.unpackbits(np.frombuffer(sections.constant_bitmap, np.uint8))[:nb].astype(bool)
    firsts = np.frombuffer(sections.firsts, dtype="<i4").astype(np.int64)
    live = np.flatnonzero(~constant)
    _expect(sections.widths, live.size, "block widths")
    widths = np.frombuffer(sections.widths, dtype=np.uint8).astype(np.int64)
    if widths.size and (widths.min() < 1 or widths.max() > 32):
        raise CorruptStreamError("block width outside 1..32")

    counts = np.full(nb, block_size, dtype=np.int64)
    counts[-1] = total_count - (nb - 1) * block_size
    ndeltas = counts[live] - 1
    if np.any(ndeltas == 0):
        raise CorruptStreamError("single-element block flagged non-constant")
    total_deltas = int(ndeltas.sum())
    payload_bits = int((ndeltas * widths).sum())
    _expect(sections.sign_bits, -(-total_deltas // 8), "sign bits")
    _expect(sections.payload, -(-payload_bits // 8), "payload")

    out = np.repeat(firsts, counts)
    if live.size == 0:
        return out
    sign_all = np.unpackbits(np.frombuffer(sections.sign_bits, np.uint8))
    pay_all = np.unpackbits(np.frombuffer(sections.payload, np.uint8))
    delta_off = np.concatenate([[0], np.cumsum(ndeltas)])
    bit_off = np.concatenate([[0], np.cumsum(ndeltas * widths)])

    def decode_chunk(c):
        lo, hi = c
        w = np.repeat(widths[lo:hi], ndeltas[lo:hi])
        mask = _width_mask(w)
        bits = np.zeros((w.size, 32), dtype=np.uint8)
        bits[mask] = pay_all[bit_off[lo]:bit_off[hi]]
        mag = np.packbits(bits, axis=1).view(">u4").ravel().astype(np.int64)
        neg = sign_all[delta_off[lo]:delta_off[hi]].astype(bool)
        return np.where(neg, -mag, mag)

    chunks = [(s, min(s + BLOCKS_PER_CHUNK, live.size)) for s in range(0, live.size, BLOCKS_PER_CHUNK)]
    deltas = np.concatenate(run_chunks(decode_chunk, chunks, threads))

    # scatter deltas into a (live, width) grid and integrate each row; a block
    # never holds more than total_count values, whatever the declared size
    bw = int(min(block_size, total_count))
    grid = np.zeros((live.size, bw), dtype=np.int64)
    cols = np.arange(bw - 1)[None, :] < ndeltas[:, None]
    grid[:, 1:][cols] = deltas
    grid[:, 0] = firsts[live]
    rows = np.cumsum(grid, axis=1)
    starts = live * block_size
    pos = (starts[:, None] + np.arange(bw)[None, :])
    keep = np.arange(bw)[None, :] < counts[live][:, None]
    out[pos[keep]] = rows[keep]
    if out.min() < _INT32_MIN or out.max() > _INT32_MAX:
        raise CorruptStreamError("decoded value outside signed 32-bit range")
    return out


def _expect(buf: bytes, size: int, what: str) -> None:
    if len(buf) != size:
        kind = "truncated" if len(buf) < size else "oversized"
        raise CorruptStreamError(f"{what} section {kind}: {len(buf)} bytes, expected {size}")


def encode_rank_metadata(ranks, block_size: int = 32, threads=1) -> EncodedSections:
    """Second pass of the block codec over integer rank metadata (no quantization)."""
    r = np.asarray(ranks, dtype=np.int64).ravel()
    if r.size and r.min() < 0:
        raise ValidationError("ranks must be non-negative")
    return encode_indices(r, block_size, threads)


def decode_rank_metadata(sections: EncodedSections, count: int, block_size: int = 32, threads=1) -> np.ndarray:
    out = decode_indices(sections, count, block_size, threads)
    if out.size and out.min() < 0:
        raise CorruptStreamError("negative rank in metadata")
    return out
