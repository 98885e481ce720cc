"""Reproducible random streams.

Every stream is derived from a single integer master seed by keyed hashing of
``(master, purpose tag, index...)``. Streams use the counter-based Philox bit
generator, so a stream depends only on its key and never on the order in
which other streams were consumed.
"""

import hashlib
import numbers

import numpy as np

__all__ = ["derive_seed_sequence", "stream", "as_generator", "spawn_generators"]


def _tag_key(tag):
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed_sequence(master, tag, *index):
    """Seed sequence keyed by ``(master, tag, *index)``."""
    if not isinstance(master, numbers.Integral) or master < 0:
        raise ValueError(f"master seed must be a non-negative integer, got {master!r}")
    key = (_tag_key(tag),) + tuple(int(i) for i in index)
    return np.random.SeedSequence(entropy=int(master), spawn_key=key)


def stream(master, tag, *index):
    """Independent generator for one purpose (and optional indices)."""
    return np.random.Generator(np.random.Philox(derive_seed_sequence(master, tag, *index)))


def as_generator(random_state=None):
    """Coerce ``None``, an int, a ``SeedSequence`` or a ``Generator`` into a generator.

    Generators are returned as is (the caller's stream is consumed).
    """
    if isinstance(random_state, np.random.Generator):
        return random_state
    if isinstance(random_state, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(random_state))
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.Generator(np.random.Philox(random_state))
    raise TypeError(f"cannot build a random generator from {type(random_state).__name__}")


def spawn_generators(random_state, k):
    """``k`` child generators, deterministic given ``random_state``."""
    if isinstance(random_state, np.random.SeedSequence):
        children = random_state.spawn(k)
    elif random_state is None or isinstance(random_state, numbers.Integral):
        children = np.random.SeedSequence(random_state).spawn(k)
    else:
        return as_generator(random_state).spawn(k)
    return [np.random.Generator(np.random.Philox(c)) for c in children]
