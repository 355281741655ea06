"""Counter-based random streams.

Every random quantity in a run is a pure function of a key and a tuple of
integer counters, so any worker can regenerate the value for iteration ``i``
without coordinating with anyone else. The mixing function is the SplitMix64
finalizer applied to uint64 arrays, which lets whole blocks of
(iteration, coordinate) counters be evaluated at once.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# stream tags; distinct constants keep streams independent
OMEGA = 0x01
FEATURE_PHASE = 0x02
MASK = 0x03
SURVIVOR = 0x04
INSTANCE = 0x05
SECRET = 0x06
TREE = 0x07


def _mix(z):
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def _as_u64(x):
    if isinstance(x, (int, np.integer)):
        return np.uint64(int(x) & _MASK64)
    a = np.asarray(x)
    if a.dtype != np.uint64:
        a = a.astype(np.int64).view(np.uint64) if a.dtype.kind == "i" else a.astype(np.uint64)
    return a


def hash64(key, *counters):
    """Hash ``key`` together with integer counters (scalars or broadcastable arrays)."""
    with np.errstate(over="ignore"):
        h = np.asarray(_mix(_as_u64(key) + _GOLDEN))
        for c in counters:
            h = _mix(h ^ _mix(_as_u64(c) + _GOLDEN))
    return h


def to_unit(h):
    """Map uint64 hashes to doubles on the open interval (0, 1)."""
    return ((np.asarray(h) >> np.uint64(11)).astype(np.float64) + 0.5) * (1.0 / 9007199254740992.0)


def uniform(key, *counters):
    """Uniform doubles on (0, 1) indexed by ``counters``."""
    return to_unit(hash64(key, *counters))


def derive_key(seed, *tags):
    """Collapse a seed and tags into a single uint64 key (as a Python int)."""
    return int(hash64(seed, *tags))
