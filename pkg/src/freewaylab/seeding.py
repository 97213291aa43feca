"""Named, disjoint seed streams derived from one master seed.

Every piece of randomness in an experiment hangs off the master seed through
a (stream-name, index...) key, so training and evaluation scenarios can never
share entropy and any subcommand re-run reproduces byte-identical outputs.
"""

import zlib

import numpy as np


def stream_seed(master: int, name: str, *indices: int) -> np.random.SeedSequence:
    tag = zlib.crc32(name.encode())
    return np.random.SeedSequence(entropy=master, spawn_key=(tag, *indices))


def stream_rng(master: int, name: str, *indices: int) -> np.random.Generator:
    return np.random.default_rng(stream_seed(master, name, *indices))
