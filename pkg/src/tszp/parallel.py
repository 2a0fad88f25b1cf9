"""Fixed-partition worker pool.

Chunk boundaries depend only on the data size, never on the thread count,
and results are reassembled in chunk order, so every parallel stage produces
identical output for any number of threads.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

ENV_THREADS = "TSZP_THREADS"

# elements per chunk for flat stages; rows are grouped to roughly this size
CHUNK_ELEMS = 1 << 18


def default_threads() -> int:
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    return os.cpu_count() or 1


def resolve_threads(threads) -> int:
    if threads is None:
        return default_threads()
    threads = int(threads)
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    return threads


def flat_chunks(n: int, unit: int = 1, chunk: int = CHUNK_ELEMS):
    """Split ``range(n)`` into ``(start, stop)`` pairs aligned to ``unit``."""
    step = max(unit, (chunk // unit) * unit)
    return [(s, min(s + step, n)) for s in range(0, n, step)]


def row_chunks(ny: int, nx: int, chunk: int = CHUNK_ELEMS):
    rows = max(1, chunk // max(nx, 1))
    return [(s, min(s + rows, ny)) for s in range(0, ny, rows)]


def run_chunks(fn, chunks, threads=1) -> list:
    """Apply ``fn`` to each chunk, returning results in chunk order."""
    threads = resolve_threads(threads)
    if threads == 1 or len(chunks) <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=min(threads, len(chunks))) as pool:
        return list(pool.map(fn, chunks))
