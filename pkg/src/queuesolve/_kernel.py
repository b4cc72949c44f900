"""Compiled inner loop of the Data Collection process.

Semantics match :class:`queuesolve.collection.NodeProcess` driven through
:class:`queuesolve.engine.Network` exactly: the same uniforms produce the
same queue trajectories.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def run_slots(q, cnt, T, stopped, prev, generated, sunk,
              rates, is_sink, indptr, indices, cum,
              U, active, counting, listing_eps, trace, trace_pos):
    """Advance ``U.shape[2]`` super-rounds; a super-round gives each colour one slot.

    q, cnt, T, stopped, prev, rates, is_sink : (colours, n)
    generated, sunk : (colours,)
    U : (colours, n, slots, 2) uniforms -- [.., 0] generation, [.., 1] neighbour
    trace : (rows, colours, n); queue snapshot after each super-round when rows > 0

    Returns the number of super-rounds executed (fewer only when every
    counting node has met the listing stop rule).
    """
    ncol, n = q.shape
    nslots = U.shape[2]
    dest = np.empty(n, np.int64)
    listing = listing_eps > 0.0
    record = trace.shape[0] > 0
    for s in range(nslots):
        for c in range(ncol):
            if not active[c]:
                continue
            for u in range(n):
                dest[u] = -1
                r = rates[c, u]
                if r > 0.0 and U[c, u, s, 0] < r:
                    q[c, u] += 1
                    generated[c] += 1
            for u in range(n):
                if is_sink[c, u]:
                    continue
                counts = counting and not stopped[c, u]
                if counts:
                    T[c, u] += 1
                if q[c, u] > 0:
                    x = U[c, u, s, 1]
                    k = indptr[u]
                    hi = indptr[u + 1] - 1
                    while k < hi and x >= cum[k]:
                        k += 1
                    dest[u] = indices[k]
                    q[c, u] -= 1
                    if counts:
                        cnt[c, u] += 1
                if counts and listing:
                    est = cnt[c, u] / T[c, u]
                    inc = est - prev[c, u]
                    if inc > 0.0 and inc <= listing_eps:
                        stopped[c, u] = True
                    prev[c, u] = est
            for u in range(n):
                v = dest[u]
                if v >= 0:
                    if is_sink[c, v]:
                        sunk[c] += 1
                    else:
                        q[c, v] += 1
        if record:
            for c in range(ncol):
                for u in range(n):
                    trace[trace_pos + s, c, u] = q[c, u]
        if listing and counting:
            done = True
            for c in range(ncol):
                if active[c]:
                    for u in range(n):
                        if not is_sink[c, u] and not stopped[c, u]:
                            done = False
            if done:
                return s + 1
    return nslots
