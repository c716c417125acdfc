"""Counter-based random streams keyed by (seed, estimand, chunk).

Every Monte Carlo estimate draws its samples in fixed-size chunks; chunk k
of estimand ``name`` under ``seed`` always comes from the same Philox stream,
so results do not depend on how chunks are scheduled.
"""

from __future__ import annotations

import zlib
from concurrent.futures import Executor
from typing import Callable

import numpy as np

CHUNK = 1 << 16
SEED_MASK = (1 << 64) - 1


def estimand_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def stream_for(seed: int, estimand: str, index: int = 0) -> np.random.Generator:
    return substream(seed, estimand_key(estimand), index)


def chunked(
    n: int,
    seed: int,
    estimand: str,
    draw: Callable[[np.random.Generator, int], np.ndarray],
    executor: Executor | None = None,
) -> np.ndarray:
    """Concatenate ``draw(rng_k, size_k)`` over the chunks of n samples, in chunk order."""
    if n < 1:
        raise ValueError("need at least one sample")
    sizes = [CHUNK] * (n // CHUNK)
    if n % CHUNK:
        sizes.append(n % CHUNK)
    key = estimand_key(estimand)
    jobs = [(substream(seed, key, k), size) for k, size in enumerate(sizes)]
    if executor is None:
        parts = [draw(rng, size) for rng, size in jobs]
    else:
        parts = list(executor.map(lambda job: draw(*job), jobs))
    return np.concatenate(parts, axis=0)
