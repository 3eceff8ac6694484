"""Counter-based random streams.

All randomness in a run flows from one master seed.  Substreams are Philox
generators keyed by (master_seed, hash(labels)), so any draw is a pure
function of the seed and its labels: parallel and serial execution orders,
or re-running a single step in isolation, produce identical numbers.
"""

import hashlib

import numpy as np


def _label_key(labels):
    h = hashlib.blake2b(repr(labels).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def stream(master_seed, *labels):
    """Philox generator for the substream identified by ``labels``."""
    key = np.array([np.uint64(master_seed), np.uint64(_label_key(labels))])
    return np.random.Generator(np.random.Philox(key=key))


def spawn_indices(n):
    """Default per-particle stream indices 0..n-1."""
    return np.arange(n, dtype=np.int64)
