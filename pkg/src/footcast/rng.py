"""Counter-style random streams keyed by tuples of integers.

Every random draw in the package goes through :func:`stream`, so a draw is a
pure function of its key and never of evaluation order.
"""
from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _word(key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & _MASK64


def stream(*keys) -> np.random.Generator:
    """Independent generator for the key tuple (ints or short strings)."""
    ss = np.random.SeedSequence([_word(k) for k in keys])
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(*keys) -> int:
    """Collapse a key tuple into a 32-bit seed."""
    return int(np.random.SeedSequence([_word(k) for k in keys]).generate_state(1)[0])
