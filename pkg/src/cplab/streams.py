"""Deterministic random streams and replication-parallel mapping.

Every replication ``k`` of a task draws from its own generator seeded by
``(master_seed, tag, key..., k)``.  Replications are grouped into blocks of a
fixed size, so results do not depend on how many workers process the blocks.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 500


def _tag_int(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, *key: int | str) -> np.random.Generator:
    """Generator for the stream addressed by ``key`` under ``seed``."""
    spawn_key = tuple(_tag_int(k) if isinstance(k, str) else int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


def replication_streams(seed: int, key: Sequence[int | str], start: int, stop: int):
    return [stream(seed, *key, k) for k in range(start, stop)]


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("CPLAB_WORKERS", "1"))
    return max(1, int(workers))


def map_replications(
    func: Callable[..., np.ndarray],
    n_reps: int,
    seed: int,
    key: Sequence[int | str],
    args: tuple = (),
    workers: int | None = None,
    block_size: int = BLOCK_SIZE,
):
    """Run ``func(rngs, *args)`` over fixed-size replication blocks.

    ``func`` receives the list of per-replication generators of one block and
    returns a sequence with one entry per replication.  The concatenated result
    is ordered by replication index.
    """
    blocks = [(lo, min(lo + block_size, n_reps)) for lo in range(0, n_reps, block_size)]
    workers = resolve_workers(workers)
    jobs = [(func, seed, tuple(key), lo, hi, args) for lo, hi in blocks]
    if workers == 1 or len(blocks) <= 1:
        parts = [_run_block(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
            parts = list(pool.map(_run_block, jobs))
    out = []
    for part in parts:
        out.extend(part)
    return out


def _run_block(job):
    func, seed, key, lo, hi, args = job
    return list(func(replication_streams(seed, key, lo, hi), *args))
