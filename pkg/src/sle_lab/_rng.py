"""Seed derivation and a small counter-based generator usable inside numba kernels.

Per-trial seeds are derived with a keyed 64-bit mixer so that a trial's
randomness depends only on (master seed, experiment kind, scale index,
trial index) and never on scheduling.
"""

import hashlib

import numpy as np
from numba import njit

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """splitmix64 finalizer on a Python int."""
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def _label_key(label: str) -> int:
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *parts) -> int:
    """Fold ``parts`` (ints or strings) into ``master`` and return a 63-bit seed."""
    h = mix64(int(master) & MASK64)
    for p in parts:
        key = _label_key(p) if isinstance(p, str) else int(p) & MASK64
        h = mix64(h ^ key)
    return h >> 1


def trial_seeds(master: int, kind: str, scale_index: int, n: int) -> np.ndarray:
    return np.array([derive_seed(master, kind, scale_index, i) for i in range(n)],
                    dtype=np.uint64)


# --- numba side -----------------------------------------------------------

@njit(cache=True)
def nb_mix(x):
    x = np.uint64(x) + np.uint64(GOLDEN)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


@njit(cache=True)
def nb_uniform(state):
    """Advance a one-element uint64 state array; return a float in (0, 1)."""
    state[0] = state[0] + np.uint64(GOLDEN)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return ((z >> np.uint64(11)) + 0.5) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def nb_normal(state):
    # Box-Muller, one variate per call; the second is discarded to keep the
    # stream position a simple function of the number of draws.
    u1 = nb_uniform(state)
    u2 = nb_uniform(state)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@njit(cache=True)
def nb_state(seed):
    s = np.empty(1, dtype=np.uint64)
    s[0] = nb_mix(np.uint64(seed))
    return s


@njit(cache=True)
def site_bit(key, index):
    """Fair bit attached to lattice site ``index`` under trial key ``key``."""
    h = nb_mix(np.uint64(key) ^ (np.uint64(index) * np.uint64(GOLDEN)))
    h = nb_mix(h)
    return (h >> np.uint64(63)) == np.uint64(1)
