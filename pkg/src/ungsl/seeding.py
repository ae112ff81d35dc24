"""Named random streams derived from one 64-bit master seed."""
import hashlib

import numpy as np


def stream_seed(master, label):
    digest = hashlib.blake2b(f"{int(master)}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def stream(master, label):
    """Independent generator for ``(master, label)``; same inputs, same stream."""
    return np.random.default_rng(stream_seed(master, label))
