"""Counter-based normal streams.

Samples are produced in fixed-size blocks; block ``j`` of stream ``tag`` is
drawn from a Philox generator keyed by (seed, tag, j).  The partition into
blocks never depends on the number of workers, so results are identical for
any worker count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK = 8192


def block_generator(seed: int, tag: int, block: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(tag), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def map_blocks(fn, nblocks: int, workers: int = 1):
    """Apply ``fn(j)`` to every block index, results in block order."""
    if workers <= 1 or nblocks <= 1:
        return [fn(j) for j in range(nblocks)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, range(nblocks)))


def standard_normals(seed: int, count: int, dim: int, tag: int = 0,
                     workers: int = 1) -> np.ndarray:
    """(count, dim) standard normals, deterministic in (seed, tag, count)."""
    nblocks = -(-count // BLOCK)

    def one(j):
        n = min(BLOCK, count - j * BLOCK)
        return block_generator(seed, tag, j).standard_normal((n, dim))

    parts = map_blocks(one, nblocks, workers)
    if not parts:
        return np.zeros((0, dim))
    return np.concatenate(parts, axis=0)
