"""Compiled event loop for :func:`bestofn.simulator.run`.

This is a line-by-line transcription of the reference loop in
``simulator._run_python`` for instances without a quality sampler or
schedule. It consumes the same uniform and normal streams in the same
order, so both engines produce bit-identical records; the test-suite
checks this across rules, buffer modes, noise and sampling modes.

The kernel is resumable. It returns early when it runs short of random
numbers or trajectory rows, and the caller tops the buffers up and calls
again. Per-agent opinion buffers are not stored: a buffer is filled and
consumed within the same event, so one scratch array is enough.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

DONE = 0
NEED_UNIFORMS = 1
NEED_NORMALS = 2
NEED_ROWS = 3

# integer state slots
I_WINNER, I_EVENTS, I_UPOS, I_ZPOS, I_ROWS, I_NDIS = range(6)
# float state slots
F_NOW, F_NEXT = range(2)


@njit(cache=True)
def _sift_down(ht, hi, start, pos):
    # heapq._siftdown: move the item at pos up towards start
    t, a = ht[pos], hi[pos]
    while pos > start:
        parent = (pos - 1) >> 1
        if t < ht[parent] or (t == ht[parent] and a < hi[parent]):
            ht[pos], hi[pos] = ht[parent], hi[parent]
            pos = parent
            continue
        break
    ht[pos], hi[pos] = t, a


@njit(cache=True)
def _replace_root(ht, hi, t, a):
    # heapq.heapreplace followed by heapq._siftup
    end = len(ht)
    pos = 0
    child = 1
    while child < end:
        right = child + 1
        if right < end and not (ht[child] < ht[right] or
                                (ht[child] == ht[right] and hi[child] < hi[right])):
            child = right
        ht[pos], hi[pos] = ht[child], hi[child]
        pos = child
        child = 2 * pos + 1
    ht[pos], hi[pos] = t, a
    _sift_down(ht, hi, 0, pos)


@njit(cache=True)
def _snapshot(rows, r, t, nexp, ndis):
    n = len(nexp)
    rows[r, 0] = t
    for i in range(n):
        rows[r, 1 + i] = nexp[i]
        rows[r, 1 + n + i] = ndis[i]


@njit(cache=True)
def advance(phase, option, ends, ht, hi, dis, pos, nexp, ndis, opinions,
            cost, quality, U, Z, rows, ist, fst,
            G, g, sigma, q_min, threshold, max_time, with_replacement,
            majority, include_self, every_event, sample_dt):
    """Run events until a decision, the time limit, or a resource runs out.

    ``phase`` is 0 for exploration and 1 for dissemination; options are
    0-based here. Returns one of DONE, NEED_UNIFORMS, NEED_NORMALS, NEED_ROWS.
    """
    n = len(cost)
    buf = np.empty(G, dtype=np.int64)
    chosen = np.empty(G, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    up = ist[I_UPOS]
    zp = ist[I_ZPOS]
    r = ist[I_ROWS]
    nd = ist[I_NDIS]
    events = ist[I_EVENTS]
    winner = ist[I_WINNER]
    next_sample = fst[F_NEXT]
    status = DONE
    while winner == 0:
        t = ht[0]
        aid = hi[0]
        if t > max_time:
            break
        short = False
        while next_sample <= t:
            if r == rows.shape[0]:
                short = True
                break
            _snapshot(rows, r, next_sample, nexp, ndis)
            r += 1
            next_sample += sample_dt
        if short or (every_event and r == rows.shape[0]):
            status = NEED_ROWS
            break
        if up + G + 2 > len(U):
            status = NEED_UNIFORMS
            break
        if sigma > 0 and zp + 1 > len(Z):
            status = NEED_NORMALS
            break
        fst[F_NOW] = t
        old = option[aid]
        if phase[aid] == 1:
            others = nd - 1
            p = pos[aid]
            m = 0
            if others > 0:
                if with_replacement:
                    for _ in range(G):
                        k = int(U[up] * others)
                        up += 1
                        k = k + 1 if k >= p else k
                        buf[m] = option[dis[k]]
                        m += 1
                elif G >= others:
                    for k in range(others):
                        kk = k + 1 if k >= p else k
                        buf[m] = option[dis[kk]]
                        m += 1
                else:
                    # Floyd's algorithm, as RandomStream.distinct_below
                    for j in range(others - G, others):
                        k = int(U[up] * (j + 1))
                        up += 1
                        for s in range(m):
                            if chosen[s] == k:
                                k = j
                                break
                        chosen[m] = k
                        m += 1
                    for s in range(m):
                        k = chosen[s]
                        k = k + 1 if k >= p else k
                        buf[s] = option[dis[k]]
            last = dis[nd - 1]
            nd -= 1
            if last != aid:
                dis[p] = last
                pos[last] = p
            pos[aid] = -1
            # decision rule
            new = old
            if m > 0:
                if majority:
                    for i in range(n):
                        counts[i] = 0
                    for s in range(m):
                        counts[buf[s]] += 1
                    if include_self:
                        counts[old] += 1
                    best = 0
                    for i in range(1, n):
                        if counts[i] > counts[best]:
                            best = i
                    tie = False
                    for i in range(n):
                        if i != best and counts[i] == counts[best]:
                            tie = True
                    new = old if tie else best
                else:
                    new = buf[int(U[up] * m)]
                    up += 1
            option[aid] = new
            phase[aid] = 0
            u = 1.0 - U[up]
            up += 1
            ends[aid] = t + (-cost[new] * math.log(u))
            ndis[old] -= 1
            nexp[new] += 1
            if new != old:
                opinions[old] -= 1
                opinions[new] += 1
                if opinions[new] >= threshold:
                    winner = new + 1
        else:
            q = quality[old]
            if sigma > 0:
                q += sigma * Z[zp]
                zp += 1
            q = min(1.0, max(q_min, q))
            phase[aid] = 1
            u = 1.0 - U[up]
            up += 1
            ends[aid] = t + (-g * q * math.log(u))
            pos[aid] = nd
            dis[nd] = aid
            nd += 1
            nexp[old] -= 1
            ndis[old] += 1
        _replace_root(ht, hi, ends[aid], aid)
        events += 1
        if every_event:
            _snapshot(rows, r, t, nexp, ndis)
            r += 1
    ist[I_UPOS] = up
    ist[I_ZPOS] = zp
    ist[I_ROWS] = r
    ist[I_NDIS] = nd
    ist[I_EVENTS] = events
    ist[I_WINNER] = winner
    fst[F_NEXT] = next_sample
    return status
