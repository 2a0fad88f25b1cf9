"""Topology side-channel: the packed 2-bit class map and per-bin extremum ranks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CorruptMetadataError, CorruptStreamError, DimensionError
from .grid import ScalarField2D
from .quantizer import quantize
from .topology import MAXIMUM, MINIMUM, CriticalPointMap


@dataclass(frozen=True)
class RankMetadata:
    """One rank per extremum, in raster order of the class map."""

    ranks: np.ndarray

    def __len__(self):
        return int(self.ranks.size)


@dataclass(frozen=True)
class RankLookup:
    """Decoded ranks aligned with extremum positions.

    ``positions`` are flat raster indices; ``group`` numbers the
    (class, bin) groups and ``group_size`` is the size of each member's group.
    """

    nx: int
    positions: np.ndarray
    ranks: np.ndarray
    classes: np.ndarray
    bins: np.ndarray
    group: np.ndarray
    group_size: np.ndarray

    def __len__(self):
        return int(self.positions.size)

    def as_dict(self) -> dict:
        """``{(x, y): rank}``."""
        return {
            (int(p % self.nx), int(p // self.nx)): int(r)
            for p, r in zip(self.positions, self.ranks)
        }


def _extrema_positions(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    return np.flatnonzero((flat == MINIMUM) | (flat == MAXIMUM))


def _group(classes: np.ndarray, bins: np.ndarray):
    """Group ids in order of first appearance and the size of each member's group."""
    if classes.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    key = np.stack([classes.astype(np.int64), bins.astype(np.int64)], axis=1)
    _, first, inverse, counts = np.unique(
        key, axis=0, return_index=True, return_inverse=True, return_counts=True
    )
    inverse = inverse.ravel()
    # renumber groups by first raster appearance so ids do not depend on bin values
    order = np.argsort(first, kind="stable")
    renum = np.empty_like(order)
    renum[order] = np.arange(order.size)
    return renum[inverse], counts[inverse]


def build_rank_metadata(fld: ScalarField2D, cp_map: CriticalPointMap, eps: float) -> RankMetadata:
    """Rank every extremum within its (class, bin) group, 1 = smallest value."""
    if (fld.nx, fld.ny) != (cp_map.nx, cp_map.ny):
        raise DimensionError("field and critical-point map dimensions differ")
    pos = _extrema_positions(cp_map.labels)
    if pos.size == 0:
        return RankMetadata(np.zeros(0, dtype=np.int64))
    values = fld.values.ravel()[pos].astype(np.float64)
    classes = cp_map.labels.ravel()[pos]
    bins = quantize(values, eps)
    # ties in value fall back to raster order (pos is already ascending)
    order = np.lexsort((pos, values, bins, classes))
    sc = classes[order]
    sb = bins[order]
    new_group = np.ones(order.size, dtype=bool)
    new_group[1:] = (sc[1:] != sc[:-1]) | (sb[1:] != sb[:-1])
    starts = np.flatnonzero(new_group)
    group_start = starts[np.cumsum(new_group) - 1]
    ranks = np.empty(order.size, dtype=np.int64)
    ranks[order] = np.arange(order.size) - group_start + 1
    return RankMetadata(ranks)


def pack_map(cp_map: CriticalPointMap) -> bytes:
    """Four 2-bit labels per byte, first label in the two most significant bits."""
    flat = cp_map.labels.ravel()
    n = flat.size
    padded = np.zeros(-(-n // 4) * 4, dtype=np.uint8)
    padded[:n] = flat
    quads = padded.reshape(-1, 4)
    packed = (quads[:, 0] << 6) | (quads[:, 1] << 4) | (quads[:, 2] << 2) | quads[:, 3]
    return packed.astype(np.uint8).tobytes()


def unpack_map(data: bytes, nx: int, ny: int) -> CriticalPointMap:
    n = nx * ny
    if len(data) != -(-n // 4):
        raise CorruptStreamError(
            f"class map holds {len(data)} bytes, expected {-(-n // 4)} for {nx}x{ny}"
        )
    b = np.frombuffer(data, dtype=np.uint8)
    quads = np.stack([(b >> 6) & 3, (b >> 4) & 3, (b >> 2) & 3, b & 3], axis=1).ravel()
    return CriticalPointMap(quads[:n].reshape(ny, nx))


def resolve_ranks(
    cp_map: CriticalPointMap,
    base: ScalarField2D,
    ranks,
    eps: float,
    bins=None,
) -> RankLookup:
    """Align decoded ranks with the extrema of ``cp_map``.

    Group membership is re-derived from the bin of each extremum.  ``bins``
    may carry the decoded bin indices directly; otherwise they are recovered
    by quantizing the base reconstruction, whose values are bin centres.
    """
    r = np.asarray(getattr(ranks, "ranks", ranks), dtype=np.int64).ravel()
    pos = _extrema_positions(cp_map.labels)
    if r.size != pos.size:
        raise CorruptMetadataError(
            f"{r.size} ranks for {pos.size} extrema in the critical-point map"
        )
    classes = cp_map.labels.ravel()[pos]
    if bins is None:
        b = quantize(base.values.ravel()[pos].astype(np.float64), eps)
    else:
        b = np.asarray(bins, dtype=np.int64).ravel()
        if b.size == cp_map.nx * cp_map.ny:
            b = b[pos]
    group, size = _group(classes, b)
    if r.size:
        if r.min() < 1 or np.any(r > size):
            raise CorruptMetadataError("rank outside 1..group size")
        # each group's ranks must be a permutation of 1..k
        seen = np.unique(np.stack([group, r], axis=1), axis=0)
        if seen.shape[0] != r.size:
            raise CorruptMetadataError("duplicate rank within a group")
    return RankLookup(cp_map.nx, pos, r, classes, b, group, size)
