"""Compiled inner loops for the kinetic remap.

Each line is processed independently, so results do not depend on how
lines are split across threads.
"""

from __future__ import annotations

import os

# OpenMP avoids numba probing (and warning about) an outdated system TBB.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba as nb
import numpy as np

PAD = 4


@nb.njit(cache=True)
def _remap_line(m, alpha, beta, periodic, limit, mp, G, D, out):
    L = m.shape[0]
    P = PAD
    n = L + 2 * P
    for j in range(n):
        k = j - P
        if 0 <= k < L:
            mp[j] = m[k]
        elif periodic:
            mp[j] = m[k % L]
        else:
            mp[j] = 0.0
    G[0] = 0.0
    for j in range(n):
        G[j + 1] = G[j] + mp[j]
    D[0] = 0.0
    D[1] = 0.0
    D[n - 1] = 0.0
    D[n] = 0.0
    for e in range(2, n - 1):
        b = mp[e - 1]
        c = mp[e]
        s = (7.0 * (b + c) - (mp[e - 2] + mp[e + 1])) / 12.0
        if limit:
            hi = 3.0 * min(b, c)
            s = min(s, hi)
            s = max(s, 0.0)
        D[e] = s
    lo = -(P - 2.0)
    hi = L + P - 2.0
    prev = 0.0
    for j in range(L + 1):
        pos = alpha * j + beta
        if pos < lo:
            pos = lo
        elif pos > hi:
            pos = hi
        pos += P
        i = int(np.floor(pos))
        i = min(i, n - 1)
        t = pos - i
        t2 = t * t
        t3 = t2 * t
        g = (2 * t3 - 3 * t2 + 1) * G[i] + (t3 - 2 * t2 + t) * D[i] + (3 * t2 - 2 * t3) * G[i + 1] + (t3 - t2) * D[i + 1]
        if j > 0:
            out[j - 1] = g - prev
        prev = g


@nb.njit(cache=True, parallel=True)
def remap_last(src, dst, alpha, beta, periodic, limit):
    """Remap ``src`` along its last axis into ``dst``.

    Both are 4-D (possibly strided views); line ``(i, j, k)`` departs from
    ``alpha[i, j, k] * e + beta[i, j, k]`` for edge ``e``.
    """
    n0, n1, n2, L = src.shape
    n = L + 2 * PAD
    for i in nb.prange(n0):
        mp = np.empty(n)
        G = np.empty(n + 1)
        D = np.empty(n + 1)
        line = np.empty(L)
        res = np.empty(L)
        for j in range(n1):
            for k in range(n2):
                for q in range(L):
                    line[q] = src[i, j, k, q]
                _remap_line(line, alpha[i, j, k], beta[i, j, k], periodic, limit, mp, G, D, res)
                for q in range(L):
                    dst[i, j, k, q] = res[q]


@nb.njit(cache=True, parallel=True)
def remap_mid(src, dst, alpha, beta, periodic, limit, block):
    """Remap the middle axis of ``src`` (shape ``(A, L, B)``, C-contiguous) into ``dst``.

    Lines are indexed by ``(a, b)`` and processed in blocks of ``block``
    consecutive ``b`` so the inner loops run over contiguous memory.
    """
    A, L, B = src.shape
    n = L + 2 * PAD
    nblk = (B + block - 1) // block
    lo = -(PAD - 2.0)
    hi = L + PAD - 2.0
    for task in nb.prange(A * nblk):
        a = task // nblk
        b0 = (task % nblk) * block
        w = min(block, B - b0)
        mp = np.empty((n, w))
        G = np.empty((n + 1, w))
        D = np.zeros((n + 1, w))
        prev = np.empty(w)
        for j in range(n):
            k = j - PAD
            if 0 <= k < L:
                for q in range(w):
                    mp[j, q] = src[a, k, b0 + q]
            elif periodic:
                kk = k % L
                for q in range(w):
                    mp[j, q] = src[a, kk, b0 + q]
            else:
                for q in range(w):
                    mp[j, q] = 0.0
        for q in range(w):
            G[0, q] = 0.0
        for j in range(n):
            for q in range(w):
                G[j + 1, q] = G[j, q] + mp[j, q]
        for e in range(2, n - 1):
            for q in range(w):
                bb = mp[e - 1, q]
                cc = mp[e, q]
                s = (7.0 * (bb + cc) - (mp[e - 2, q] + mp[e + 1, q])) / 12.0
                if limit:
                    top = 3.0 * min(bb, cc)
                    s = min(s, top)
                    s = max(s, 0.0)
                D[e, q] = s
        for j in range(L + 1):
            for q in range(w):
                pos = alpha[a, b0 + q] * j + beta[a, b0 + q]
                if pos < lo:
                    pos = lo
                elif pos > hi:
                    pos = hi
                pos += PAD
                i = int(np.floor(pos))
                i = min(i, n - 1)
                t = pos - i
                t2 = t * t
                t3 = t2 * t
                g = (2 * t3 - 3 * t2 + 1) * G[i, q] + (t3 - 2 * t2 + t) * D[i, q] + (3 * t2 - 2 * t3) * G[i + 1, q] + (t3 - t2) * D[i + 1, q]
                if j > 0:
                    dst[a, j - 1, b0 + q] = g - prev[q]
                prev[q] = g
