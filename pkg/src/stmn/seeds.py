"""Named random streams derived from one root seed.

Streams are independent of each other and of the order in which they are
requested, so a baseline run and a manifold run with the same root seed see
the same data, the same initial weights and the same batch order.
"""

import zlib

import numpy as np


def stream_seed(root: int, name: str) -> int:
    key = zlib.crc32(name.encode("utf-8"))
    return int(np.random.SeedSequence(int(root), spawn_key=(key,)).generate_state(1)[0])


def stream(root: int, name: str) -> np.random.Generator:
    return np.random.default_rng(stream_seed(root, name))
