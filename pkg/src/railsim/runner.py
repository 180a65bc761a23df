"""Deterministic trial seeding and chunked parallel execution.

Every trial draws from its own generator seeded by (master_seed,
trial_index), so results never depend on how trials are distributed
over workers.  Work is split into fixed-size chunks of trial indices;
chunk results are reduced in index order.  The worker count comes from
the RAILSIM_THREADS environment variable (default 1) and must never
affect output values.
"""

from __future__ import annotations

import multiprocessing
import os

import numpy as np

THREADS_ENV = "RAILSIM_THREADS"
DEFAULT_CHUNK = 1024


def worker_count(explicit: int | None = None) -> int:
    """Resolve the worker count: explicit argument, else env, else 1."""
    if explicit is None:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            explicit = int(raw)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")
    if explicit < 1:
        raise ValueError(f"worker count must be >= 1, got {explicit}")
    return explicit


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Independent generator for one trial."""
    if master_seed < 0 or trial_index < 0:
        raise ValueError("seed and trial index must be non-negative")
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial_index]))


def chunk_ranges(n: int, chunk_size: int = DEFAULT_CHUNK) -> list:
    """Split range(n) into fixed [start, stop) chunks.

    The chunk layout depends only on n and chunk_size, never on the
    worker count, so reductions over chunks are reproducible.
    """
    if n < 1:
        raise ValueError("need at least one trial")
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


def map_chunks(fn, ranges, threads: int | None = None) -> list:
    """Apply ``fn`` to each (start, stop) range; results in chunk order.

    ``fn`` must be picklable (module-level function or partial of one)
    when more than one worker is used.
    """
    threads = worker_count(threads)
    if threads == 1 or len(ranges) <= 1:
        return [fn(r) for r in ranges]
    # Fork keeps startup cheap and inherits loaded modules; results come
    # back ordered because Pool.map preserves input order.
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=min(threads, len(ranges))) as pool:
        return pool.map(fn, ranges)
