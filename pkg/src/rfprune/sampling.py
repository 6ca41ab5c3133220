"""Reproducible random streams and index resampling.

Every random quantity in the package is drawn from a generator obtained with
:func:`derive_stream`. The generator is numpy's Philox4x64 counter-based bit
generator keyed by the pair ``(master_seed, stream_id)``: the low 64 bits of
the 128-bit key hold the master seed, the high 64 bits hold the stream id.
Distinct pairs give distinct keys, hence non-overlapping counter sequences,
and the state is a pure function of the pair. Draws do not depend on which
other streams exist, which thread runs them, or in which order they run.

Nested streams (repetition -> tree, repetition -> data, ...) are obtained by
chaining :func:`derive_seed`, which hashes a path of integers into a 64-bit
seed by taking the first raw output of each intermediate stream.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def _check_seed(value: int, name: str) -> int:
    value = int(value)
    if value < 0 or value > MASK64:
        raise ValueError(f"{name} must fit in 64 unsigned bits, got {value}")
    return value


def derive_stream(master_seed: int, stream_id: int) -> np.random.Generator:
    """Return the generator for stream ``stream_id`` of ``master_seed``."""
    master_seed = _check_seed(master_seed, "master_seed")
    stream_id = _check_seed(stream_id, "stream_id")
    key = (stream_id << 64) | master_seed
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, *path: int) -> int:
    """Hash ``master_seed`` and a path of stream ids into a 64-bit seed.

    ``derive_seed(s)`` is ``s`` itself; each path element descends one level.
    """
    seed = _check_seed(master_seed, "master_seed")
    for stream_id in path:
        seed = int(derive_stream(seed, stream_id).bit_generator.random_raw())
    return seed


def subsample_without_replacement(n: int, a_n: int, g: np.random.Generator) -> np.ndarray:
    """Draw ``a_n`` distinct indices from ``range(n)`` by partial Fisher-Yates.

    Every ``a_n``-subset is equally likely, and the returned order is a
    uniformly random arrangement of it.
    """
    n = int(n)
    a_n = int(a_n)
    if a_n < 1 or a_n > n:
        raise ValueError(f"subsample size must satisfy 1 <= a_n <= n, got a_n={a_n}, n={n}")
    # position i swaps with a uniform position in [i, n)
    targets = g.integers(np.arange(a_n), n).tolist()
    pool = list(range(n))
    for i, j in enumerate(targets):
        pool[i], pool[j] = pool[j], pool[i]
    return np.array(pool[:a_n], dtype=np.intp)


def bootstrap_sample(n: int, g: np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform indices from ``range(n)`` (with replacement)."""
    n = int(n)
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    return g.integers(0, n, size=n).astype(np.intp)
