"""Deterministic, splittable random streams.

Every stochastic stage of the simulation pulls from its own generator,
keyed by the global seed plus a label path such as
``(seed, "point", 12, "detect", 1, "+")``.  Keys are hashed into a
128-bit Philox key, so streams are independent of each other and of
evaluation order: adding a detector, reordering scan points, or running
points on several workers never perturbs the draws of an unrelated
stage.  Identical (seed, labels) always reproduce identical draws.
"""

import hashlib

import numpy as np

_SEP = b"\x1f"


def stream_key(seed: int, *labels) -> int:
    """Hash (seed, labels...) into a 128-bit integer key."""
    h = hashlib.blake2b(digest_size=16)
    h.update(str(int(seed)).encode("ascii"))
    for label in labels:
        h.update(_SEP)
        h.update(str(label).encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for one named stage of the pipeline."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, *labels)))
