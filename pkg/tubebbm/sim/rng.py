# -*- coding: utf-8 -*-
"""
Counter-based random streams. Every draw is a pure function of (replication key, particle id,
step, channel), hashed with the splitmix64 finalizer in numpy uint64 arithmetic. A particle's
randomness therefore doesn't depend on which other particles are alive, on the order particles
are stored in, or on how replications are batched together.
"""
import numpy as np
from scipy.special import ndtri

from .constants import CHANNEL_COUNT

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX_1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_2 = np.uint64(0x94D049BB133111EB)
_SHIFT_30 = np.uint64(30)
_SHIFT_27 = np.uint64(27)
_SHIFT_31 = np.uint64(31)
_MANTISSA_SHIFT = np.uint64(11)
_UNIT = 2.0 ** -53
_MASK_64 = (1 << 64) - 1


def as_key(value):
    """Converts a python int (any sign or size) or integer array to uint64."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, np.uint64):
        return np.uint64(int(value) & _MASK_64)
    return np.asarray(value, dtype=np.uint64)


def splitmix64(z):
    with np.errstate(over='ignore'):
        z = as_key(z) + _GOLDEN_GAMMA
        z = (z ^ (z >> _SHIFT_30)) * _MIX_1
        z = (z ^ (z >> _SHIFT_27)) * _MIX_2
        return z ^ (z >> _SHIFT_31)


def mix(a, b):
    """Hashes an ordered pair of 64-bit values into one. Broadcasts over arrays."""
    return splitmix64(splitmix64(a) ^ as_key(b))


def replication_key(seed, replication):
    return mix(as_key(seed), as_key(replication))


def stream_key(rep_key, particle_id):
    return mix(rep_key, particle_id)


def child_id(parent_id, slot):
    return mix(parent_id, as_key(slot))


def uniforms(streams, step, channel):
    """
    :return: floats in the open interval (0, 1), one per stream
    """
    counter = as_key(int(step) * CHANNEL_COUNT + int(channel))
    bits = mix(streams, counter) >> _MANTISSA_SHIFT
    return (np.asarray(bits).astype(np.float64) + 0.5) * _UNIT


def normals(streams, step, channel):
    return ndtri(uniforms(streams, step, channel))
