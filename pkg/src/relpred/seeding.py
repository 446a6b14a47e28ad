"""Named random substreams derived from one root seed.

Every stochastic component (weight init, batch shuffling, dropout masks,
random baselines) pulls its own generator keyed by a stream name, so fixing
the root seed reproduces each component independently of the others.
"""

from zlib import crc32

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for the named stream under ``root_seed``."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(crc32(name.encode("utf-8")),))
    return np.random.default_rng(seq)


def child_seed(root_seed: int, name: str) -> int:
    """Stable integer seed for the named stream (for APIs that take an int)."""
    seq = np.random.SeedSequence(root_seed, spawn_key=(crc32(name.encode("utf-8")),))
    return int(seq.generate_state(1, dtype=np.uint32)[0])
