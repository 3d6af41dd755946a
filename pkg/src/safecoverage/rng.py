"""Counter-based random streams derived from a run seed by stable hashing."""
from __future__ import annotations

import hashlib

import numpy as np


def stream(seed: int, *labels) -> np.random.Generator:
    """Philox generator keyed by ``sha256(seed, labels)``.

    The same ``(seed, labels)`` always yields the same stream, independent of
    process, platform hash randomization or call order.
    """
    text = "/".join([str(int(seed))] + [str(x) for x in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    key = int.from_bytes(digest[:16], "little")
    return np.random.Generator(np.random.Philox(key=key))
