"""Named random-number streams.

All randomness in a run flows from one master seed. Each purpose
("subset", "poison", "init", ...) gets its own independent stream keyed by
name, so adding a consumer never perturbs the draws of existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "derive_seed"]


def _key(names):
    return tuple(zlib.crc32(str(n).encode("utf-8")) for n in names)


def stream(master_seed, *names):
    """Independent Generator for (master_seed, names...)."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=_key(names))
    return np.random.default_rng(seq)


def derive_seed(master_seed, *names):
    """Stable 63-bit integer seed for the named stream."""
    return int(stream(master_seed, *names).integers(2 ** 63))
