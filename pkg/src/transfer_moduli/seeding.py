"""Deterministic seed derivation.

Every random stream in the package is obtained from a master seed by
``derive_seed(master, *keys)``.  Keys are integers or short strings; each key
is folded into the running state with a splitmix64 step, so the mapping is
stable across platforms, Python versions and worker counts:

    state = master
    for key in keys:
        state = splitmix64(state ^ splitmix64(key_to_int(key)))

Strings are mapped to integers through their UTF-8 bytes (little endian,
truncated to 8 bytes after an FNV-1a fold).
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _key_to_int(key: int | str) -> int:
    if isinstance(key, str):
        h = 0xCBF29CE484222325
        for b in key.encode("utf-8"):
            h = ((h ^ b) * 0x100000001B3) & MASK64
        return h
    return int(key) & MASK64


def derive_seed(master: int, *keys: int | str) -> int:
    state = int(master) & MASK64
    for key in keys:
        state = splitmix64(state ^ splitmix64(_key_to_int(key)))
    return state


def make_rng(master: int, *keys: int | str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
