"""Scalar-field data model, raw binary I/O and synthetic field generation.

Fields are stored as ``(ny, nx)`` numpy arrays in row-major order, so the
flat index of grid point ``(x, y)`` is ``y * nx + x``.  Ingested data is
binary32; reconstructions produced by the decompressor are binary64 unless
explicitly materialized to binary32.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionError, ValidationError

RAW_DTYPES = {"f32": np.dtype("<f4"), "f64": np.dtype("<f8")}

SYNTHETIC_KINDS = ("gaussian-mixture", "sinusoid", "ramp", "random-uniform")


@dataclass(frozen=True)
class ScalarField2D:
    """Immutable 2D grid of finite floating-point samples.

    ``lipschitz`` is the per-grid-unit Lipschitz constant when it is known
    analytically (synthetic fields), otherwise ``None``.
    """

    values: np.ndarray
    lipschitz: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise DimensionError(f"expected a 2D array, got shape {arr.shape}")
        ny, nx = arr.shape
        if nx < 1 or ny < 1:
            raise DimensionError(f"grid must be at least 1x1, got {nx}x{ny}")
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        _check_finite(arr)
        arr = np.ascontiguousarray(arr)
        if arr is self.values and arr.flags.writeable:
            arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def from_flat(cls, values, nx: int, ny: int, lipschitz=None) -> "ScalarField2D":
        arr = np.asarray(values)
        if arr.size != nx * ny:
            raise DimensionError(f"{arr.size} samples cannot fill a {nx}x{ny} grid")
        return cls(arr.reshape(ny, nx), lipschitz=lipschitz)

    @property
    def nx(self) -> int:
        return self.values.shape[1]

    @property
    def ny(self) -> int:
        return self.values.shape[0]

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self) -> np.dtype:
        return self.values.dtype

    def value_range(self) -> float:
        return float(self.values.max()) - float(self.values.min())

    def __eq__(self, other):
        if not isinstance(other, ScalarField2D):
            return NotImplemented
        return (
            self.values.shape == other.values.shape
            and self.values.dtype == other.values.dtype
            and self.values.tobytes() == other.values.tobytes()
        )

    def __repr__(self):
        return f"ScalarField2D(nx={self.nx}, ny={self.ny}, dtype={self.dtype})"


def _check_finite(arr: np.ndarray) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        idx = int(np.flatnonzero(bad.ravel())[0])
        raise ValidationError(f"non-finite sample at flat index {idx}")


def load_raw(path, nx: int, ny: int, dtype: str = "f32") -> ScalarField2D:
    """Read a headerless little-endian raw file of ``nx * ny`` samples."""
    if nx < 1 or ny < 1:
        raise DimensionError(f"grid must be at least 1x1, got {nx}x{ny}")
    dt = RAW_DTYPES[dtype]
    expected = dt.itemsize * nx * ny
    actual = os.path.getsize(path)
    if actual != expected:
        raise DimensionError(
            f"{path}: {actual} bytes does not match {nx}x{ny} {dtype} ({expected} bytes)"
        )
    data = np.fromfile(path, dtype=dt).astype(dt.newbyteorder("="))
    return ScalarField2D.from_flat(data, nx, ny)


def store_raw(fld: ScalarField2D, path, dtype: str = "f32") -> None:
    """Write ``fld`` as headerless little-endian samples; inverse of :func:`load_raw`."""
    if not path:
        raise OSError("empty output path")
    dt = RAW_DTYPES[dtype]
    with open(path, "wb") as fh:
        fh.write(fld.values.astype(dt).tobytes())


def generate_synthetic(
    kind: str, nx: int, ny: int, seed: int = 0, params: Sequence[float] = ()
) -> ScalarField2D:
    """Deterministic synthetic field.

    Parameters by kind (all optional, positional):

    * ``gaussian-mixture``: n_components=8, amplitude=1, sigma_min=0.05,
      sigma_max=0.2 (sigmas as fractions of ``min(nx, ny)``)
    * ``sinusoid``: amplitude=1, periods_x=1, periods_y=1, giving
      ``A sin(2 pi kx x / nx) sin(2 pi ky y / ny)``
    * ``ramp``: slope_x=1, slope_y=slope_x
    * ``random-uniform``: low=0, high=1

    The returned field carries its Lipschitz constant per grid unit for the
    smooth kinds (``None`` for ``random-uniform``).
    """
    if nx < 1 or ny < 1:
        raise DimensionError(f"grid must be at least 1x1, got {nx}x{ny}")
    p = [float(v) for v in params]
    if not all(math.isfinite(v) for v in p):
        raise ValidationError("synthetic parameters must be finite")
    y, x = np.mgrid[0:ny, 0:nx].astype(np.float64)
    rng = np.random.default_rng(np.uint64(seed & 0xFFFFFFFFFFFFFFFF))

    if kind == "gaussian-mixture":
        n, amp, smin, smax = _fill(p, [8, 1.0, 0.05, 0.2], kind)
        if n < 1 or n != int(n) or not 0 < smin <= smax:
            raise ValidationError(f"invalid gaussian-mixture params {p}")
        n = int(n)
        scale = min(nx, ny)
        cx = rng.uniform(0, nx, n)
        cy = rng.uniform(0, ny, n)
        sig = rng.uniform(smin, smax, n) * scale
        amps = rng.uniform(-amp, amp, n)
        out = np.zeros((ny, nx))
        for i in range(n):
            r2 = (x - cx[i]) ** 2 + (y - cy[i]) ** 2
            out += amps[i] * np.exp(-r2 / (2 * sig[i] ** 2))
        # max |grad| of a*exp(-r^2/2s^2) is |a|/s * exp(-1/2)
        lip = float(np.sum(np.abs(amps) / sig) * math.exp(-0.5))
    elif kind == "sinusoid":
        amp, kx, ky = _fill(p, [1.0, 1.0, 1.0], kind)
        wx = 2 * math.pi * kx / nx
        wy = 2 * math.pi * ky / ny
        out = amp * np.sin(wx * x) * np.sin(wy * y)
        lip = abs(amp) * math.hypot(wx, wy)
    elif kind == "ramp":
        if len(p) == 1:
            p = [p[0], p[0]]
        sx, sy = _fill(p, [1.0, 1.0], kind)
        out = sx * x + sy * y
        lip = math.hypot(sx, sy)
    elif kind == "random-uniform":
        low, high = _fill(p, [0.0, 1.0], kind)
        if not low < high:
            raise ValidationError(f"random-uniform needs low < high, got {p}")
        out = rng.uniform(low, high, (ny, nx))
        lip = None
    else:
        raise ValidationError(
            f"unknown synthetic kind {kind!r}; expected one of {', '.join(SYNTHETIC_KINDS)}"
        )
    return ScalarField2D(out.astype(np.float32), lipschitz=lip)


def _fill(p, defaults, kind):
    if len(p) > len(defaults):
        raise ValidationError(f"{kind} takes at most {len(defaults)} params, got {len(p)}")
    return p + defaults[len(p):]
