"""Counter-based randomness.

Every random quantity in the package is a pure function of a 64-bit key and
an integer counter, computed with the splitmix64 finalizer. Nothing carries
hidden generator state between calls, so values do not depend on the order
in which they are requested or on how work is split across workers.
"""

import numba as nb
import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

# stream tags keep environment, walker and replica-seed streams apart
ENV_STREAM = 0x454E5649524F4E4D
WALK_STREAM = 0x57414C4B45525321
REPLICA_STREAM = 0x5245504C49434121

_INV53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    """splitmix64 finalizer on Python ints."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    """Fold integers (seed, stream tag, indices...) into one 64-bit key."""
    key = 0
    for p in parts:
        key = mix64((key ^ mix64((p & MASK64) + GOLDEN)) + GOLDEN)
    return key


def replica_seed(master_seed: int, index: int) -> int:
    """Seed of replica ``index`` under ``master_seed``; stateless."""
    return derive_key(REPLICA_STREAM, master_seed, index)


@nb.njit(inline="always")
def nb_mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def nb_uniform(key, counter):
    """Uniform double in [0, 1) for (key, counter); 53 random bits."""
    z = nb_mix64(key + np.uint64(counter) * np.uint64(GOLDEN))
    z = nb_mix64(z ^ key)
    return (z >> np.uint64(11)) * _INV53


@nb.njit(cache=True)
def uniforms(key, lo, hi):
    """Counter-based uniforms for integer counters lo..hi inclusive."""
    out = np.empty(hi - lo + 1)
    k = np.uint64(key)
    for j in range(hi - lo + 1):
        out[j] = nb_uniform(k, np.int64(lo + j))
    return out
