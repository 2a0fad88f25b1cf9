"""Critical-point classification on the 4-neighbourhood and false-case metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict

import numpy as np

from .errors import DimensionError
from .grid import ScalarField2D
from .parallel import row_chunks, run_chunks


class CriticalPointClass(IntEnum):
    REGULAR = 0
    MINIMUM = 1
    SADDLE = 2
    MAXIMUM = 3


REGULAR, MINIMUM, SADDLE, MAXIMUM = (int(c) for c in CriticalPointClass)
CLASS_NAMES = {MINIMUM: "minimum", SADDLE: "saddle", MAXIMUM: "maximum"}


@dataclass(frozen=True)
class CriticalPointMap:
    """Per-point class codes, shape ``(ny, nx)``, dtype uint8."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if lab.ndim != 2:
            raise DimensionError(f"label map must be 2D, got shape {lab.shape}")
        if lab.size and lab.max() > 3:
            raise ValueError("label codes must be in 0..3")
        if lab is self.labels and lab.flags.writeable:
            lab = lab.copy()
        lab.flags.writeable = False
        object.__setattr__(self, "labels", lab)

    @property
    def nx(self) -> int:
        return self.labels.shape[1]

    @property
    def ny(self) -> int:
        return self.labels.shape[0]

    def count(self, cls: int) -> int:
        return int(np.count_nonzero(self.labels == cls))

    def __eq__(self, other):
        if not isinstance(other, CriticalPointMap):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)


@dataclass
class FalseCaseReport:
    fn_count: int
    fp_count: int
    ft_count: int
    fn_by_class: Dict[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return self.fn_count + self.fp_count + self.ft_count

    def as_dict(self) -> dict:
        return {
            "fn": self.fn_count,
            "fp": self.fp_count,
            "ft": self.ft_count,
            "total": self.total,
            "fn_by_class": dict(self.fn_by_class),
        }


def neighbor_values(arr: np.ndarray, x: int, y: int):
    """Return (top, bottom, left, right); missing neighbours are ``None``."""
    ny, nx = arr.shape
    t = arr[y - 1, x] if y > 0 else None
    d = arr[y + 1, x] if y < ny - 1 else None
    l = arr[y, x - 1] if x > 0 else None
    r = arr[y, x + 1] if x < nx - 1 else None
    return t, d, l, r


def classify_array_point(arr: np.ndarray, x: int, y: int) -> int:
    """Class code of ``(x, y)`` in a raw ``(ny, nx)`` array."""
    p = arr[y, x]
    t, d, l, r = neighbor_values(arr, x, y)
    avail = [v for v in (t, d, l, r) if v is not None]
    if not avail:
        return REGULAR
    if all(p < v for v in avail):
        return MINIMUM
    if all(p > v for v in avail):
        return MAXIMUM
    if t is not None and d is not None and l is not None and r is not None:
        if (t > p and d > p and l < p and r < p) or (t < p and d < p and l > p and r > p):
            return SADDLE
    return REGULAR


def classify_point(fld: ScalarField2D, x: int, y: int) -> CriticalPointClass:
    if not (0 <= x < fld.nx and 0 <= y < fld.ny):
        raise IndexError(f"({x}, {y}) outside {fld.nx}x{fld.ny} grid")
    return CriticalPointClass(classify_array_point(fld.values, x, y))


def _classify_rows(arr: np.ndarray, y0: int, y1: int) -> np.ndarray:
    ny, nx = arr.shape
    p = arr[y0:y1]
    # missing neighbours are NaN: every comparison with them is False
    pad_row = np.full((1, nx), np.nan, dtype=arr.dtype)
    up = arr[y0 - 1:y1 - 1] if y0 > 0 else np.vstack([pad_row, arr[0:y1 - 1]])
    down = arr[y0 + 1:y1 + 1] if y1 < ny else np.vstack([arr[y0 + 1:ny], pad_row])
    pad_col = np.full((y1 - y0, 1), np.nan, dtype=arr.dtype)
    left = np.hstack([pad_col, p[:, :-1]])
    right = np.hstack([p[:, 1:], pad_col])

    is_min = ~((up <= p) | (down <= p) | (left <= p) | (right <= p))
    is_max = ~((up >= p) | (down >= p) | (left >= p) | (right >= p))
    saddle = ((up > p) & (down > p) & (left < p) & (right < p)) | (
        (up < p) & (down < p) & (left > p) & (right > p)
    )
    out = np.zeros(p.shape, dtype=np.uint8)
    out[saddle] = SADDLE
    out[is_min] = MINIMUM
    out[is_max] = MAXIMUM
    return out


def classify_array(arr: np.ndarray, threads: int = 1) -> np.ndarray:
    """Vectorised class codes for every point of a ``(ny, nx)`` array."""
    arr = np.asarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    ny, nx = arr.shape
    if nx * ny == 1:
        return np.zeros((1, 1), dtype=np.uint8)
    parts = run_chunks(lambda r: _classify_rows(arr, *r), row_chunks(ny, nx), threads)
    return np.vstack(parts)


def detect_critical_points(fld: ScalarField2D, threads: int = 1) -> CriticalPointMap:
    return CriticalPointMap(classify_array(fld.values, threads))


def count_false_cases(original: CriticalPointMap, reconstructed: CriticalPointMap) -> FalseCaseReport:
    a = original.labels
    b = reconstructed.labels
    if a.shape != b.shape:
        raise DimensionError(f"map shapes differ: {a.shape} vs {b.shape}")
    crit_a = a != REGULAR
    crit_b = b != REGULAR
    fn_mask = crit_a & ~crit_b
    fp = int(np.count_nonzero(~crit_a & crit_b))
    ft = int(np.count_nonzero(crit_a & crit_b & (a != b)))
    lost = a[fn_mask]
    by_class = {name: int(np.count_nonzero(lost == code)) for code, name in CLASS_NAMES.items()}
    return FalseCaseReport(int(fn_mask.sum()), fp, ft, by_class)
