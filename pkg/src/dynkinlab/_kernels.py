"""Compiled per-replicate simulation loops.

Each replicate advances its own Brownian path step by step and stops as soon
as its rule fires, so heavy-tailed stopping times only cost what they use.
``W`` is accumulated as ``W_k = W_{k-1} + sqrt(dt) * z_k`` exactly like the
cumulative sum in :func:`dynkinlab.pathsim.simulate_path`; the two code paths
therefore produce bit-identical decisions.
"""
import math

import numpy as np
from numba import njit

from .rng import bridge_uniform, normal_pair, seed_state

IMMEDIATE = 0
DETERMINISTIC = 1
HIT = 2
COMPOSITE = 3
NEVER = 4
HAZARD = 5

# bridge probabilities below exp(-_BRIDGE_CUTOFF) are treated as zero
_BRIDGE_CUTOFF = 50.0


@njit(inline="always", cache=True)
def _next_normal(s, buf):
    if buf[0] != 0.0:
        buf[0] = 0.0
        return buf[1]
    z1, z2 = normal_pair(s)
    buf[0] = 1.0
    buf[1] = z2
    return z1


@njit(inline="always", cache=True)
def _crossed(xp, xn, bp, bn, upper, dt, bridge, seed, stream, rep, k):
    if upper:
        if xn >= bn:
            return True
        d1 = bp - xp
        d2 = bn - xn
    else:
        if xn <= bn:
            return True
        d1 = xp - bp
        d2 = xn - bn
    if bridge and d1 > 0.0 and d2 > 0.0 and math.isfinite(d1) and math.isfinite(d2):
        e = 2.0 * d1 * d2 / dt
        if e < _BRIDGE_CUTOFF:
            return bridge_uniform(seed, stream, rep, k) < math.exp(-e)
    return False


@njit(nogil=True, cache=True)
def run_rule(code, x, kstar, bvals, upper, leg2, zthr, seed, stream, rep0, n, nsteps, dt, bridge,
             idx_out, pos_out, aux_out):
    """Simulate ``n`` replicates ``rep0, rep0+1, ...`` of one stopping rule.

    Outputs per replicate: stop step (``-1`` if censored), stop position and an
    auxiliary step (the level-0 hitting step for the composite rule).
    """
    sqdt = math.sqrt(dt)
    s = np.empty(4, dtype=np.uint64)
    buf = np.zeros(2)
    for i in range(n):
        rep = np.uint64(rep0 + i)
        idx_out[i] = -1
        pos_out[i] = np.nan
        aux_out[i] = -1
        if code == IMMEDIATE:
            idx_out[i] = 0
            pos_out[i] = x
            aux_out[i] = 0
            continue
        if code == NEVER:
            continue
        seed_state(seed, stream, rep, s)
        buf[0] = 0.0
        w = 0.0
        if code == DETERMINISTIC:
            if kstar > nsteps:
                continue
            for k in range(1, kstar + 1):
                w = w + sqdt * _next_normal(s, buf)
            idx_out[i] = kstar
            pos_out[i] = x + w
            aux_out[i] = kstar
        elif code == HIT:
            if (upper and x >= bvals[0]) or ((not upper) and x <= bvals[0]):
                idx_out[i] = 0
                pos_out[i] = x
                aux_out[i] = 0
                continue
            xp = x
            for k in range(1, nsteps + 1):
                w = w + sqdt * _next_normal(s, buf)
                xn = x + w
                if _crossed(xp, xn, bvals[k - 1], bvals[k], upper, dt, bridge, seed, stream, rep, k):
                    idx_out[i] = k
                    pos_out[i] = bvals[k]
                    aux_out[i] = k
                    break
                xp = xn
        elif code == COMPOSITE:
            sigma = -1
            if x == 0.0:
                sigma = 0
            else:
                up0 = x < 0.0
                xp = x
                for k in range(1, nsteps + 1):
                    w = w + sqdt * _next_normal(s, buf)
                    xn = x + w
                    if _crossed(xp, xn, 0.0, 0.0, up0, dt, bridge, seed, stream, rep, k):
                        sigma = k
                        break
                    xp = xn
            if sigma < 0:
                continue
            aux_out[i] = sigma
            w_sigma = w
            yp = 0.0
            for k in range(sigma + 1, nsteps + 1):
                w = w + sqdt * _next_normal(s, buf)
                yn = w - w_sigma
                j = k - sigma
                if _crossed(yp, yn, leg2[j - 1], leg2[j], True, dt, bridge, seed, stream, rep, k):
                    idx_out[i] = k
                    pos_out[i] = leg2[j]
                    break
                yp = yn
        elif code == HAZARD:
            for k in range(1, nsteps + 1):
                inc = sqdt * _next_normal(s, buf)
                w = w + inc
                if inc < sqdt * zthr[k]:
                    idx_out[i] = k
                    pos_out[i] = x + w
                    aux_out[i] = k
                    break


@njit(nogil=True, cache=True)
def fill_paths(seed, stream, rep0, n, nsteps, dt, out):
    """Rows of ``out`` (shape ``(n, nsteps + 1)``) receive ``W`` on the grid."""
    sqdt = math.sqrt(dt)
    s = np.empty(4, dtype=np.uint64)
    buf = np.zeros(2)
    for i in range(n):
        seed_state(seed, stream, np.uint64(rep0 + i), s)
        buf[0] = 0.0
        w = 0.0
        out[i, 0] = 0.0
        for k in range(1, nsteps + 1):
            w = w + sqdt * _next_normal(s, buf)
            out[i, k] = w
