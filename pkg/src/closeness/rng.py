"""Reproducible random streams.

Every random draw in the package comes from a generator built by
:func:`substream`.  A stream is identified by the root seed plus a tuple of
non-negative integer keys (trial index, grid cell, repetition, ...).  String
labels are mapped to integers with CRC-32 so that call sites can name their
streams.  Because a stream depends only on ``(seed, keys)``, trials can be
run in any order or in parallel and still produce identical results.
"""

import zlib

import numpy as np


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


def substream(seed, *keys):
    """Return a ``numpy.random.Generator`` for stream ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))


def child_seed(rng):
    """Draw a fresh 63-bit root seed from ``rng``."""
    return int(rng.integers(0, 2**63 - 1))


def as_generator(rng):
    """Coerce ``None``, an int seed or a Generator into a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if rng is None:
        return substream(0)
    return substream(int(rng))
