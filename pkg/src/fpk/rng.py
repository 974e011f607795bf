"""Counter-based, splittable normal and uniform variates.

Every random number is a pure function of ``(key, counter)``: a 64-bit key
identifies a stream and the counter identifies the draw within it.  Keys are
derived hierarchically, e.g. ``key = derive(derive(stream_root(seed, tag),
node), trajectory)``, so any partition of trajectories across workers sees
exactly the same numbers.

The mixing function is the SplitMix64 finalizer.  Draw ``c`` of stream ``k`` is
``mix(k + GOLDEN * (c + 1))``.  Uniforms use the top 53 bits; normals come in
Box-Muller pairs, normal ``2q`` and ``2q + 1`` of a stream are the cosine and
sine branch built from uniform draws ``2q`` and ``2q + 1``.
"""

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S11 = np.uint64(11)
_S27 = np.uint64(27)
_S30 = np.uint64(30)
_S31 = np.uint64(31)
_ONE = np.uint64(1)
_TWO = np.uint64(2)
_INV53 = 2.0**-53

# Stream tags keep independent uses of one master seed apart.
TAG_HSDE = 1
TAG_PARTICLES = 2
TAG_ORIGINS = 3
TAG_TRUTH = 4

_MASK64 = (1 << 64) - 1


@nb.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python integer (wrapping to 64 bits)."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_root(seed: int, tag: int) -> int:
    """Root key for ``tag``-purpose streams under the master ``seed``."""
    return mix64(mix64(seed & _MASK64) + 0x9E3779B97F4A7C15 * (tag + 1))


def derive(key: int, index: int) -> int:
    """Child key number ``index`` of ``key``."""
    return mix64(key ^ mix64((index + 1) * 0x9E3779B97F4A7C15))


@nb.njit(nogil=True, cache=True)
def _derive_keys(key, start, count, out):
    for i in range(count):
        idx = np.uint64(start + i) + _ONE
        out[i] = _mix(key ^ _mix(idx * GOLDEN))


def derive_keys(key: int, start: int, count: int) -> np.ndarray:
    """Vector of child keys ``derive(key, i)`` for ``i`` in ``[start, start+count)``."""
    out = np.empty(count, dtype=np.uint64)
    _derive_keys(np.uint64(key), start, count, out)
    return out


@nb.njit(nogil=True, cache=True)
def _uniforms(keys, counter0, n, out):
    for i in range(keys.shape[0]):
        k = keys[i]
        for a in range(n):
            c = np.uint64(counter0 + a) + _ONE
            out[i, a] = (_mix(k + GOLDEN * c) >> _S11) * _INV53


@nb.njit(nogil=True, cache=True)
def _normals(keys, counter0, n, out):
    two_pi = 2.0 * np.pi
    for i in range(keys.shape[0]):
        k = keys[i]
        a = 0
        while a < n:
            q = np.uint64((counter0 + a) // 2)
            c = _TWO * q + _ONE
            u1 = ((_mix(k + GOLDEN * c) >> _S11) + _ONE) * _INV53
            u2 = (_mix(k + GOLDEN * (c + _ONE)) >> _S11) * _INV53
            r = np.sqrt(-2.0 * np.log(u1))
            if (counter0 + a) % 2 == 0:
                out[i, a] = r * np.cos(two_pi * u2)
                if a + 1 < n:
                    out[i, a + 1] = r * np.sin(two_pi * u2)
                a += 2
            else:
                out[i, a] = r * np.sin(two_pi * u2)
                a += 1


def uniforms(keys: np.ndarray, counter0: int, n: int) -> np.ndarray:
    """Uniform draws on [0, 1): row ``i`` holds draws ``counter0 .. counter0+n-1`` of ``keys[i]``."""
    out = np.empty((keys.shape[0], n))
    _uniforms(np.ascontiguousarray(keys, dtype=np.uint64), counter0, n, out)
    return out


def normals(keys: np.ndarray, counter0: int, n: int) -> np.ndarray:
    """Standard normals: row ``i`` holds normals ``counter0 .. counter0+n-1`` of ``keys[i]``."""
    out = np.empty((keys.shape[0], n))
    _normals(np.ascontiguousarray(keys, dtype=np.uint64), counter0, n, out)
    return out
