"""Named, counter-based random streams.

Every source of randomness in the package draws from a stream identified by
(master seed, label path). Streams are backed by Philox, a counter-based
generator, keyed by a SHA-256 digest of the labels, so:

  * the same (seed, labels) always yields the same sequence, on any platform;
  * distinct labels yield statistically independent streams;
  * work units (episodes, sweep cells, plan invocations) can be evaluated in
    any order, or in parallel, without changing results.

Use it like::

    g = stream(seed, "ep3", "corrupt")
    g.standard_normal(4)
"""

import hashlib

import numpy as np


def _digest(master_seed: int, labels: tuple) -> bytes:
    h = hashlib.sha256()
    h.update(str(int(master_seed)).encode())
    for label in labels:
        h.update(b"/")
        h.update(str(label).encode())
    return h.digest()


def stream(master_seed: int, *labels) -> np.random.Generator:
    """Return the generator for the given label path under the master seed."""
    key = int.from_bytes(_digest(master_seed, labels)[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(master_seed: int, *labels) -> int:
    """Collapse a label path to a plain 63-bit integer seed.

    Handy when a sub-component wants its own master seed (e.g. one sweep
    cell spawning per-episode streams).
    """
    return int.from_bytes(_digest(master_seed, labels)[:8], "little") >> 1
