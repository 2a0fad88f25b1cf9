"""End-to-end compression, decompression and verification."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional

import numpy as np

from . import codec
from .container import FLAG_TOPOLOGY, CompressedStream, join_ranks, stream_stats
from .errors import CorruptStreamError, DimensionError, ValidationError
from .grid import ScalarField2D
from .parallel import flat_chunks, resolve_threads, run_chunks
from .quantizer import bin_half_width, dequantize, quantize
from .restore import (
    CorrectionOutcome,
    outcome_stats,
    refine_saddles,
    restore_extrema,
    restore_order,
)
from .topo_meta import build_rank_metadata, pack_map, resolve_ranks, unpack_map
from .topology import MAXIMUM, MINIMUM, count_false_cases, detect_critical_points

# largest RBF support radius (k_size 7)
R_MAX = 3
GRID_SPACING = 1.0


@dataclass
class CompressorConfig:
    eps_value: float
    eps_mode: str = "absolute"
    block_size: int = 32
    topology: bool = True
    threads: Optional[int] = None
    lipschitz_hint: Optional[float] = None

    def __post_init__(self):
        if self.eps_mode not in ("absolute", "range-relative"):
            raise ValidationError(f"eps_mode must be 'absolute' or 'range-relative', got {self.eps_mode!r}")
        if not (math.isfinite(self.eps_value) and self.eps_value > 0):
            raise ValidationError(f"error bound must be positive, got {self.eps_value}")
        if not 2 <= self.block_size < 2**32:
            raise ValidationError(f"block_size must lie in [2, 2**32), got {self.block_size}")
        if self.threads is not None and self.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {self.threads}")
        if self.lipschitz_hint is not None and not self.lipschitz_hint >= 0:
            raise ValidationError("lipschitz_hint must be non-negative")

    def effective_eps(self, fld: ScalarField2D) -> float:
        if self.eps_mode == "range-relative":
            rng = fld.value_range()
            # a constant field has no range; fall back to the absolute reading
            if rng > 0:
                return self.eps_value * rng
        return float(self.eps_value)


def _quantize_field(values: np.ndarray, eps: float, threads) -> np.ndarray:
    flat = values.reshape(-1)
    parts = run_chunks(lambda c: quantize(flat[c[0]:c[1]], eps), flat_chunks(flat.size), threads)
    return np.concatenate(parts)


def compress(fld: ScalarField2D, config: CompressorConfig, timings: Optional[dict] = None) -> CompressedStream:
    """Quantize, block-encode and (optionally) attach the topology side-channel.

    Critical points and ranks are taken from the original field before it is
    quantized.  The header records the bin half-width actually used, which
    is the requested bound less a rounding margin (see ``bin_half_width``).
    """
    threads = resolve_threads(config.threads)
    eps = bin_half_width(config.effective_eps(fld), np.abs(fld.values).max())
    timings = {} if timings is None else timings

    t0 = time.perf_counter()
    q = _quantize_field(fld.values, eps, threads)
    t1 = time.perf_counter()
    main = codec.encode_indices(q, config.block_size, threads)
    t2 = time.perf_counter()
    timings["quantize_ms"] = 1e3 * (t1 - t0)
    timings["encode_ms"] = 1e3 * (t2 - t1)

    flags = 0
    cp_bytes = b""
    rank_bytes = b""
    if config.topology:
        cp_map = detect_critical_points(fld, threads)
        ranks = build_rank_metadata(fld, cp_map, eps)
        cp_bytes = pack_map(cp_map)
        rank_bytes = join_ranks(codec.encode_rank_metadata(ranks.ranks, config.block_size, threads))
        flags |= FLAG_TOPOLOGY
        timings["topology_ms"] = 1e3 * (time.perf_counter() - t2)
    return CompressedStream(
        fld.nx, fld.ny, eps, config.block_size, main.as_tuple() + (cp_bytes, rank_bytes), flags
    )


@dataclass
class Reconstruction:
    field: ScalarField2D
    base: ScalarField2D
    outcomes: List[CorrectionOutcome]
    timings: Dict[str, float]

    def correction_stats(self) -> dict:
        return outcome_stats(self.outcomes)


def reconstruct(stream: CompressedStream, threads=None, dtype=np.float64) -> Reconstruction:
    """Decode ``stream`` and run the restore stages when topology is present.

    ``dtype`` selects the working precision: binary64 keeps bin centres and
    step offsets exact; binary32 materializes the output format directly.
    """
    threads = resolve_threads(threads)
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError("dtype must be float32 or float64")
    n = stream.nx * stream.ny
    eps = stream.eps
    timings: Dict[str, float] = {}

    t0 = time.perf_counter()
    q = codec.decode_indices(stream.main, n, stream.block_size, threads)
    t1 = time.perf_counter()
    values = dequantize(q, eps).astype(dtype)
    if not np.all(np.isfinite(values)):
        raise CorruptStreamError("decoded bins overflow the output precision")
    base = ScalarField2D.from_flat(values, stream.nx, stream.ny)
    t2 = time.perf_counter()
    timings["decode_ms"] = 1e3 * (t1 - t0)
    timings["dequantize_ms"] = 1e3 * (t2 - t1)

    outcomes: List[CorrectionOutcome] = []
    fld = base
    if stream.topology:
        cp_map = unpack_map(stream.cp_map_bytes, stream.nx, stream.ny)
        n_ext = cp_map.count(MINIMUM) + cp_map.count(MAXIMUM)
        ranks = codec.decode_rank_metadata(stream.rank_sections, n_ext, stream.block_size, threads)
        lookup = resolve_ranks(cp_map, base, ranks, eps, bins=q)
        t3 = time.perf_counter()
        fld, out = restore_extrema(base, cp_map, lookup, eps)
        outcomes += out
        t4 = time.perf_counter()
        fld, out = restore_order(fld, cp_map, lookup, eps)
        outcomes += out
        t5 = time.perf_counter()
        fld, out = refine_saddles(fld, cp_map, eps)
        outcomes += out
        t6 = time.perf_counter()
        timings["metadata_ms"] = 1e3 * (t3 - t2)
        timings["extrema_ms"] = 1e3 * (t4 - t3)
        timings["order_ms"] = 1e3 * (t5 - t4)
        timings["saddle_ms"] = 1e3 * (t6 - t5)
    return Reconstruction(fld, base, outcomes, timings)


def decompress(stream: CompressedStream, threads=None, dtype=np.float64) -> ScalarField2D:
    return reconstruct(stream, threads, dtype).field


@dataclass
class VerificationReport:
    max_abs_error: float
    mean_abs_error: float
    psnr: Optional[float]
    fn: int
    fp: int
    ft: int
    fn_by_class: Dict[str, int]
    eps_effective: float
    bounds_satisfied: Dict[str, Optional[bool]]
    compression_ratio: Optional[float] = None
    bit_rate: Optional[float] = None
    lipschitz: Optional[float] = None
    rounding_allowance: bool = False
    correction_stats: Optional[dict] = None
    timings_ms: Dict[str, float] = field(default_factory=dict)

    @property
    def total_false_cases(self) -> int:
        return self.fn + self.fp + self.ft

    def passed(self, bound: str = "2eps") -> bool:
        key = {"eps": "within_eps", "2eps": "within_2eps", "lipschitz": "within_lipschitz_bound"}[bound]
        return self.fp == 0 and self.ft == 0 and bool(self.bounds_satisfied.get(key))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total_false_cases"] = self.total_false_cases
        return d


def verify(
    original: ScalarField2D,
    reconstructed: ScalarField2D,
    eps: float,
    lipschitz_hint: Optional[float] = None,
    stream: Optional[CompressedStream] = None,
    threads: int = 1,
) -> VerificationReport:
    """Pointwise error, PSNR and FN/FP/FT counts of ``reconstructed``.

    When the reconstruction is binary32, each sample may additionally sit
    half a binary32 step away from the binary64 value it rounds; the bound
    checks grant exactly that allowance (reported as ``rounding_allowance``).
    """
    if original.values.shape != reconstructed.values.shape:
        raise DimensionError(
            f"dimension mismatch: {original.nx}x{original.ny} vs {reconstructed.nx}x{reconstructed.ny}"
        )
    a = original.values.astype(np.float64)
    b = reconstructed.values.astype(np.float64)
    err = np.abs(a - b)
    max_err = float(err.max())
    mse = float(np.mean(err * err))
    rng = original.value_range()
    if mse == 0:
        psnr = None  # infinite
    elif rng == 0:
        psnr = None
    else:
        psnr = 20 * math.log10(rng) - 10 * math.log10(mse)

    f32 = reconstructed.dtype == np.float32
    if f32:
        r = reconstructed.values
        slack = 0.5 * np.abs(np.nextafter(r, np.inf, dtype=np.float32).astype(np.float64) - r)
        excess = err - slack
    else:
        excess = err
    worst = float(excess.max())

    lip = lipschitz_hint if lipschitz_hint is not None else original.lipschitz
    bounds = {
        "within_eps": worst <= eps,
        "within_2eps": worst <= 2 * eps,
        "within_lipschitz_bound": None if lip is None else worst <= eps + lip * R_MAX * GRID_SPACING,
    }
    fc = count_false_cases(
        detect_critical_points(original, threads), detect_critical_points(reconstructed, threads)
    )
    report = VerificationReport(
        max_abs_error=max_err,
        mean_abs_error=float(err.mean()),
        psnr=psnr,
        fn=fc.fn_count,
        fp=fc.fp_count,
        ft=fc.ft_count,
        fn_by_class=fc.fn_by_class,
        eps_effective=eps,
        bounds_satisfied=bounds,
        lipschitz=lip,
        rounding_allowance=f32,
    )
    if stream is not None:
        st = stream_stats(stream)
        report.compression_ratio = st["compression_ratio"]
        report.bit_rate = st["bit_rate"]
    return report
