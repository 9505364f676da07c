"""Counter-based random substreams for reproducible replicate-parallel simulation.

A replicate is addressed by ``(seed, stream, replicate)``. Philox4x64-10 maps
that address to the 256-bit state of a xoshiro256** generator, which then
produces the replicate's Gaussian increments sequentially (Marsaglia polar
method). A replicate's numbers therefore depend only on its address, never on
which other replicates were simulated or in what order.

Bridge-crossing uniforms are drawn by random access: the uniform used at grid
step ``k`` of a replicate is one Philox evaluation at a counter built from
``(replicate, k)``, so it exists whether or not the step was ever inspected.
"""
import math

import numpy as np
from numba import njit

_MASK32 = np.uint64(0xFFFFFFFF)
_PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
_PHILOX_M1 = np.uint64(0xCA5A826395121157)
_WEYL0 = np.uint64(0x9E3779B97F4A7C15)
_WEYL1 = np.uint64(0xBB67AE8584CAA73B)
_U32 = np.uint64(32)
_U11 = np.uint64(11)
_TWO_M53 = 1.0 / 9007199254740992.0

# purpose words in the Philox counter
PURPOSE_STATE = 0
PURPOSE_BRIDGE = 1


@njit(inline="always", cache=True)
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _U32
    b_lo = b & _MASK32
    b_hi = b >> _U32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _U32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _U32) + (cross >> _U32)
    return hi, a * b


@njit(cache=True)
def philox4x64(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 block function; all arguments are uint64."""
    for _ in range(10):
        h0, l0 = _mulhilo(_PHILOX_M0, c0)
        h1, l1 = _mulhilo(_PHILOX_M1, c2)
        c0, c1, c2, c3 = h1 ^ c1 ^ k0, l1, h0 ^ c3 ^ k1, l0
        k0 = k0 + _WEYL0
        k1 = k1 + _WEYL1
    return c0, c1, c2, c3


@njit(cache=True)
def seed_state(seed, stream, replicate, state):
    """Fill ``state`` (uint64[4]) with the xoshiro state of one replicate."""
    a, b, c, d = philox4x64(
        np.uint64(replicate), np.uint64(PURPOSE_STATE), np.uint64(0), np.uint64(0),
        np.uint64(seed), np.uint64(stream),
    )
    if a == 0 and b == 0 and c == 0 and d == 0:
        a = _WEYL0
    state[0] = a
    state[1] = b
    state[2] = c
    state[3] = d


@njit(inline="always", cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(inline="always", cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(inline="always", cache=True)
def normal_pair(s):
    """Two independent standard normals (Marsaglia polar method)."""
    while True:
        u = (next_u64(s) >> _U11) * (2.0 * _TWO_M53) - 1.0
        v = (next_u64(s) >> _U11) * (2.0 * _TWO_M53) - 1.0
        q = u * u + v * v
        if 0.0 < q < 1.0:
            break
    r = math.sqrt(-2.0 * math.log(q) / q)
    return u * r, v * r


@njit(cache=True)
def bridge_uniform(seed, stream, replicate, step):
    """Uniform in ``[0, 1)`` attached to grid step ``step`` of a replicate."""
    a, _, _, _ = philox4x64(
        np.uint64(replicate), np.uint64(PURPOSE_BRIDGE), np.uint64(step), np.uint64(0),
        np.uint64(seed), np.uint64(stream),
    )
    return (a >> _U11) * _TWO_M53


@njit(cache=True)
def fill_normals(seed, stream, replicate, out):
    """Write the first ``len(out)`` increments-normals of a replicate."""
    s = np.empty(4, dtype=np.uint64)
    seed_state(seed, stream, replicate, s)
    n = out.shape[0]
    i = 0
    while i < n:
        z1, z2 = normal_pair(s)
        out[i] = z1
        if i + 1 < n:
            out[i + 1] = z2
        i += 2


@njit(cache=True)
def bridge_uniforms(seed, stream, replicate, steps, out):
    for j in range(steps.shape[0]):
        out[j] = bridge_uniform(seed, stream, replicate, steps[j])


def replicate_normals(seed: int, stream: int, replicate: int, n: int) -> np.ndarray:
    """Standard normals driving replicate ``replicate`` (step ``k`` uses entry ``k-1``)."""
    out = np.empty(int(n), dtype=np.float64)
    fill_normals(np.uint64(seed), np.uint64(stream), np.uint64(replicate), out)
    return out


def replicate_bridge_uniforms(seed: int, stream: int, replicate: int, steps) -> np.ndarray:
    steps = np.ascontiguousarray(steps, dtype=np.int64)
    out = np.empty(steps.shape[0], dtype=np.float64)
    bridge_uniforms(np.uint64(seed), np.uint64(stream), np.uint64(replicate), steps, out)
    return out


def philox_block(counter, key):
    """Python wrapper around :func:`philox4x64` returning four ints."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x64(c[0], c[1], c[2], c[3], k[0], k[1]))
