"""Counter-based random numbers built on the SplitMix64 finalizer.

Every draw is a pure function of ``(key, counter)``:

    mix64(z)        = SplitMix64 output finalizer (Stafford variant 13)
    splitmix64(x)   = mix64(x + GOLDEN)
    derive_seed(m, r) = splitmix64(m ^ (r * GOLDEN + STREAM))   replicate key
    uniform(key, c) = ((splitmix64(key + c * GOLDEN) >> 11) + 0.5) * 2**-53

``uniform`` is therefore the SplitMix64 stream seeded with ``key``, shifted
into the open interval (0, 1). All arithmetic is modulo 2**64. Because no
state is shared, replicate ``r`` gives identical numbers whichever worker
runs it.
"""

from __future__ import annotations

import numpy as np
from numba import njit

__all__ = ["GOLDEN", "STREAM", "mix64", "splitmix64", "derive_seed", "derive_seeds", "uniform",
           "uniforms"]

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
STREAM = np.uint64(0xD1B54A32D192ED03)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True, inline="always")
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True, inline="always")
def splitmix64(x):
    return mix64(np.uint64(x) + GOLDEN)


@njit(cache=True, nogil=True)
def derive_seed(master, r):
    """Key of replicate ``r`` under ``master``."""
    return splitmix64(np.uint64(master) ^ (np.uint64(r) * GOLDEN + STREAM))


@njit(cache=True, nogil=True)
def derive_seeds(master, start, count):
    out = np.empty(count, dtype=np.uint64)
    for i in range(count):
        out[i] = derive_seed(master, start + i)
    return out


@njit(cache=True, nogil=True, inline="always")
def uniform(key, counter):
    """Uniform draw in (0, 1) for ``(key, counter)``."""
    z = splitmix64(np.uint64(key) + np.uint64(counter) * GOLDEN)
    return (np.float64(z >> _S11) + 0.5) * _INV53


@njit(cache=True)
def uniforms(key, count):
    out = np.empty(count)
    for c in range(count):
        out[c] = uniform(key, c)
    return out


def as_master(seed) -> np.uint64:
    """Map any Python int (including negatives) to a 64-bit master seed."""
    return np.uint64(int(seed) % (1 << 64))
