"""Seed derivation on top of numpy's counter-based Philox generator.

Every random stream is addressed by a master seed plus a tuple of integer
keys (replicate id, entity id, fold, ...).  Streams with different keys are
statistically independent and do not depend on the order in which they
are created, so parallel and serial runs draw identical numbers.
"""
import zlib

import numpy as np

# stable small integers for named entities
_ENTITY_IDS = {}


def entity_id(name):
    """Map a stream name to a stable 32-bit integer."""
    if name not in _ENTITY_IDS:
        _ENTITY_IDS[name] = zlib.crc32(name.encode("utf-8"))
    return _ENTITY_IDS[name]


def _key(k):
    if isinstance(k, str):
        return entity_id(k)
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


def stream(seed, *keys):
    """Return a ``np.random.Generator`` for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *keys):
    """Derive a child 63-bit integer seed, e.g. for records that must be persisted."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
