"""Deterministic, order-independent seed derivation.

All randomness in the package flows through counter-based Philox generators
keyed by 64-bit seeds, so grid cells can run in any order (or in parallel)
and still reproduce bit-identically.
"""

import hashlib

import numpy as np


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))


def derive_seed(master_seed: int, *labels) -> int:
    """Stable 64-bit seed for a labelled cell of an experiment grid.

    Pure function of (master_seed, labels); independent of execution order.
    Labels may be strings or integers.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(master_seed)).encode())
    for lab in labels:
        h.update(b"/")
        h.update(str(lab).encode())
    return int.from_bytes(h.digest(), "little")
