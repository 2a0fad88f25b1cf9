"""Topology-preserving error-bounded lossy compression for 2D scalar fields."""

from .container import CompressedStream, read_stream, stream_stats, write_stream
from .errors import (
    BadMagicError,
    CorruptMetadataError,
    CorruptStreamError,
    DimensionError,
    QuantizationOverflowError,
    TruncatedStreamError,
    TszpError,
    UnsupportedVersionError,
    ValidationError,
)
from .grid import ScalarField2D, generate_synthetic, load_raw, store_raw
from .pipeline import CompressorConfig, compress, decompress, reconstruct, verify
from .quantizer import dequantize, quantize
from .topology import CriticalPointClass, CriticalPointMap, count_false_cases, detect_critical_points

__version__ = "0.1.0"
