"""Seed derivation and chunked random streams.

Every random quantity in the package is drawn from a stream identified by a
master seed plus a tuple of integer keys. Streams are split into fixed-size
chunks of rows so that row ``i`` of a batch has the same value no matter how
many rows are requested, how the rows are partitioned across workers, or in
what order chunks are evaluated.
"""
from __future__ import annotations

import numpy as np

# Rows per independent stream chunk. Changing this changes every draw.
CHUNK_ROWS = 4096

# Stream tags.
NOISE = 0
FD_PLUS = 1
FD_MINUS = 2
FD_SHARED = 3
FD_DIRECTION = 4
BASELINE = 5
TRAIN = 6
EVAL = 7
INIT = 8
REPEAT = 9
GROUND_TRUTH = 10
CHECK = 11

_MASK64 = (1 << 64) - 1


def _seed_sequence(seed: int, keys: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))


def derive_seed(seed: int, *keys: int) -> int:
    """Return a 64-bit seed for the child stream ``(seed, *keys)``."""
    lo, hi = _seed_sequence(seed, keys).generate_state(2, dtype=np.uint32)
    return int(lo) | (int(hi) << 32)


def generator(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(_seed_sequence(seed, keys)))


def normal_rows(seed: int, start: int, count: int, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normal rows ``[start, start + count)`` of the stream ``seed``.

    Each row has the given ``shape``. Row ``i`` lives in chunk ``i // CHUNK_ROWS``,
    which is filled sequentially, so any row can be regenerated on its own.
    """
    if count < 0 or start < 0:
        raise ValueError("start and count must be non-negative")
    out = np.empty((count,) + tuple(shape))
    stop = start + count
    pos = start
    while pos < stop:
        chunk = pos // CHUNK_ROWS
        base = chunk * CHUNK_ROWS
        upto = min(stop, base + CHUNK_ROWS)
        draws = generator(seed, chunk).standard_normal((upto - base,) + tuple(shape))
        out[pos - start: upto - start] = draws[pos - base:]
        pos = upto
    return out


def unit_vectors(seed: int, start: int, count: int, dim: int) -> np.ndarray:
    """Rows distributed uniformly on the unit sphere in ``R^dim``."""
    g = normal_rows(seed, start, count, (dim,))
    norms = np.sqrt((g * g).sum(axis=-1, keepdims=True))
    return g / norms
