"""Command-line front end: ``tszp compress|decompress|verify|generate|inspect``.

Exit codes: 0 success, 1 usage/IO/corrupt input, 2 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from .container import HEADER_SIZE, SECTION_LABELS, read_stream, stream_stats, write_stream
from .errors import TszpError
from .grid import SYNTHETIC_KINDS, generate_synthetic, load_raw, store_raw
from .parallel import ENV_THREADS
from .pipeline import CompressorConfig, compress, reconstruct, verify

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for failed verification
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _positive_float(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not (np.isfinite(v) and v > 0):
        raise argparse.ArgumentTypeError(f"error bound must be positive and finite, got {text}")
    return v


def _add_bound(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--eb", type=_positive_float, help="absolute error bound")
    g.add_argument("--rel-eb", type=_positive_float, help="error bound relative to the value range")


def _add_dims(p):
    p.add_argument("--dims", nargs=2, type=_positive_int, metavar=("NX", "NY"), required=True)


def _add_threads(p):
    p.add_argument("--threads", type=_positive_int, default=None,
                   help=f"worker threads (default: ${ENV_THREADS} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tszp", description="Topology-preserving error-bounded compressor for 2D fields.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compress", help="compress a raw binary32 field")
    p.add_argument("input")
    _add_dims(p)
    _add_bound(p)
    p.add_argument("--block", type=_positive_int, default=32, help="codec block length (default 32)")
    p.add_argument("--no-topology", action="store_true", help="omit the topology side-channel")
    _add_threads(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("decompress", help="decompress a .tszp stream to raw floats")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    _add_threads(p)
    p.add_argument("--f64", action="store_true", help="write binary64 instead of binary32")

    p = sub.add_parser("verify", help="compare a reconstruction against the original")
    p.add_argument("original")
    p.add_argument("reconstructed")
    _add_dims(p)
    _add_bound(p)
    p.add_argument("--lipschitz", type=float, default=None, help="known Lipschitz constant of the original")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--recon-f64", action="store_true", help="reconstruction file holds binary64 samples")
    p.add_argument("--stream", default=None, help=".tszp file to take compression ratio and bit rate from")
    p.add_argument("--mode", choices=("base", "topo"), default="topo",
                   help="bound to enforce: eps for base, 2*eps for topo (default)")
    _add_threads(p)

    p = sub.add_parser("generate", help="write a synthetic field plus a JSON sidecar")
    p.add_argument("kind", choices=SYNTHETIC_KINDS)
    _add_dims(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", nargs="*", type=float, default=[])
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("inspect", help="print header fields and section sizes of a .tszp file")
    p.add_argument("input")
    return parser


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def _config(args, threads) -> CompressorConfig:
    if args.eb is not None:
        return CompressorConfig(args.eb, "absolute", args.block, not args.no_topology, threads)
    return CompressorConfig(args.rel_eb, "range-relative", args.block, not args.no_topology, threads)


def cmd_compress(args, out) -> int:
    fld = load_raw(args.input, *args.dims)
    timings = {}
    t0 = time.perf_counter()
    stream = compress(fld, _config(args, args.threads), timings)
    timings["total_ms"] = 1e3 * (time.perf_counter() - t0)
    write_stream(stream, args.output)
    report = stream_stats(stream)
    report["eps"] = stream.eps
    report["topology"] = stream.topology
    report["timings_ms"] = timings
    print(_dump(report), file=out)
    return EXIT_OK


def cmd_decompress(args, out) -> int:
    stream = read_stream(args.input)
    t0 = time.perf_counter()
    # work in the output precision so representable-value steps survive the write
    rec = reconstruct(stream, args.threads, np.float64 if args.f64 else np.float32)
    rec.timings["total_ms"] = 1e3 * (time.perf_counter() - t0)
    store_raw(rec.field, args.output, "f64" if args.f64 else "f32")
    print(_dump({
        "nx": stream.nx,
        "ny": stream.ny,
        "eps": stream.eps,
        "output_dtype": "f64" if args.f64 else "f32",
        "correction_stats": rec.correction_stats(),
        "timings_ms": rec.timings,
    }), file=out)
    return EXIT_OK


def _csv_row(d: dict) -> dict:
    row = {}
    for k, v in d.items():
        if isinstance(v, dict):
            for k2, v2 in _csv_row(v).items():
                row[f"{k}.{k2}"] = v2
        else:
            row[k] = v
    return row


def cmd_verify(args, out) -> int:
    nx, ny = args.dims
    original = load_raw(args.original, nx, ny)
    recon = load_raw(args.reconstructed, nx, ny, "f64" if args.recon_f64 else "f32")
    stream = read_stream(args.stream) if args.stream else None
    if args.eb is not None:
        eps = args.eb
    else:
        rng = original.value_range()
        eps = args.rel_eb * rng if rng > 0 else args.rel_eb
    report = verify(original, recon, eps, args.lipschitz, stream, args.threads or 1)
    d = report.as_dict()
    d["mode"] = args.mode
    ok = report.passed("eps" if args.mode == "base" else "2eps")
    d["passed"] = ok
    if args.format == "json":
        print(_dump(d), file=out)
    else:
        row = _csv_row(d)
        keys = sorted(row)
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        out.write(buf.getvalue())
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


def cmd_generate(args, out) -> int:
    nx, ny = args.dims
    fld = generate_synthetic(args.kind, nx, ny, args.seed, args.params)
    store_raw(fld, args.output)
    meta = {
        "kind": args.kind,
        "nx": nx,
        "ny": ny,
        "seed": args.seed,
        "params": list(args.params),
        "dtype": "f32",
        "lipschitz": fld.lipschitz,
        "min": float(fld.values.min()),
        "max": float(fld.values.max()),
    }
    with open(args.output + ".json", "w") as fh:
        fh.write(_dump(meta) + "\n")
    print(_dump(meta), file=out)
    return EXIT_OK


def cmd_inspect(args, out) -> int:
    stream = read_stream(args.input)
    info = {
        "version": stream.version,
        "flags": stream.flags,
        "topology": stream.topology,
        "nx": stream.nx,
        "ny": stream.ny,
        "eps": stream.eps,
        "block_size": stream.block_size,
        "header_bytes": HEADER_SIZE,
        "sections": {name: len(s) for name, s in zip(SECTION_LABELS, stream.sections)},
        "file_bytes": stream.nbytes,
    }
    st = stream_stats(stream)
    info["compression_ratio"] = st["compression_ratio"]
    info["bit_rate"] = st["bit_rate"]
    print(_dump(info), file=out)
    return EXIT_OK


COMMANDS = {
    "compress": cmd_compress,
    "decompress": cmd_decompress,
    "verify": cmd_verify,
    "generate": cmd_generate,
    "inspect": cmd_inspect,
}


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args, out)
    except (TszpError, OSError, ValueError) as exc:
        print(f"tszp {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
