"""Counter-based random numbers and Poisson variates.

Every pixel owns an independent substream addressed by ``(seed, pixel index,
draw index)``; nothing depends on traversal order, chunking or thread count.
The bit generator is Philox4x32-10 (Salmon et al., SC'11), evaluated
vectorised over numpy ``uint64`` arrays so the 32x32->64 products are exact.

Stream layout per pixel (counter word 2 is the draw index):

* draw 0: two uniforms, ``(u_gauss, u_inversion)``
* draw r >= 1: the uniform pair for the r-th PTRS attempt

Poisson sampling uses sequential-search inversion for rates below
``INVERSION_MAX_RATE`` and Hormann's transformed rejection with squeeze
(PTRS) above it.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)

INVERSION_MAX_RATE = 10.0
_INVERSION_CAP = 256
_PTRS_MAX_ROUNDS = 1024


def philox4x32(counter, key, rounds: int = 10):
    """Philox4x32 block function.

    ``counter`` is a sequence of four arrays (or scalars) of 32-bit words and
    ``key`` a pair of 32-bit words; all are broadcast together. Returns four
    ``uint64`` arrays holding 32-bit outputs.
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint64) & _MASK32 for k in key)
    for _ in range(rounds):
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> _SHIFT32) ^ c1 ^ k0,
            p1 & _MASK32,
            (p0 >> _SHIFT32) ^ c3 ^ k1,
            p0 & _MASK32,
        )
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def _to_open_unit(hi, lo):
    # 53 random bits, centred in their bin: strictly inside (0, 1)
    bits = ((hi >> np.uint64(5)) << np.uint64(26)) | (lo >> np.uint64(6))
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def uniform_pair(seed: int, index, draw: int):
    """Two independent uniforms in (0, 1) for each entry of ``index``."""
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    index = np.asarray(index, dtype=np.uint64)
    key = (seed & 0xFFFFFFFF, seed >> 32)
    counter = (index & _MASK32, index >> _SHIFT32, np.uint64(draw), np.uint64(0))
    r0, r1, r2, r3 = philox4x32(counter, key)
    return _to_open_unit(r0, r1), _to_open_unit(r2, r3)


def _poisson_inversion(lam, u):
    """Sequential search of the Poisson CDF; ``lam`` must be small."""
    k = np.zeros(lam.shape, dtype=np.int64)
    p = np.exp(-lam)
    cdf = p.copy()
    active = u > cdf
    step = 0
    while active.any() and step < _INVERSION_CAP:
        step += 1
        idx = np.flatnonzero(active)
        p[idx] *= lam[idx] / step
        cdf[idx] += p[idx]
        k[idx] = step
        active[idx] = u[idx] > cdf[idx]
    return k


def _poisson_ptrs(lam, seed, index):
    """Transformed rejection with squeeze (Hormann 1993) for ``lam >= 10``."""
    slam = np.sqrt(lam)
    loglam = np.log(lam)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)

    out = np.full(lam.shape, -1, dtype=np.int64)
    pending = np.arange(lam.size)
    draw = 1
    while pending.size:
        if draw > _PTRS_MAX_ROUNDS:
            raise RuntimeError("PTRS failed to terminate")
        u, v = uniform_pair(seed, index[pending], draw)
        u = u - 0.5
        us = 0.5 - np.abs(u)
        a_, b_ = a[pending], b[pending]
        lam_ = lam[pending]
        k = np.floor((2.0 * a_ / us + b_) * u + lam_ + 0.43)

        quick = (us >= 0.07) & (v <= vr[pending])
        reject = (k < 0) | ((us < 0.013) & (v > us))
        with np.errstate(divide="ignore", invalid="ignore"):
            lhs = np.log(v) + np.log(invalpha[pending]) - np.log(a_ / (us * us) + b_)
            rhs = -lam_ + k * loglam[pending] - gammaln(k + 1.0)
        accept = quick | (~reject & (lhs <= rhs))

        out[pending[accept]] = k[accept].astype(np.int64)
        pending = pending[~accept]
        draw += 1
    return out


def poisson(lam, seed: int, index, u_inversion):
    """Poisson variates with rates ``lam`` on the substreams ``index``.

    ``u_inversion`` is the draw-0 uniform used by the small-rate branch;
    large rates consume draws 1, 2, ... of the same substream.
    """
    lam = np.asarray(lam, dtype=np.float64)
    index = np.asarray(index, dtype=np.uint64)
    k = np.zeros(lam.shape, dtype=np.int64)

    small = (lam > 0) & (lam < INVERSION_MAX_RATE)
    if small.any():
        k[small] = _poisson_inversion(lam[small], u_inversion[small])
    large = lam >= INVERSION_MAX_RATE
    if large.any():
        k[large] = _poisson_ptrs(lam[large], seed, index[large])
    return k
