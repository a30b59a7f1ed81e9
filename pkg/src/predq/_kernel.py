"""Compiled event loops for the hot single-server and cluster simulations.

These kernels trade generality for speed: they cover the standard rank
policies (plus trail and bounce), the two-class family, and the power-of-d
cluster. Exotic policies (prediction stages that occupy the server) run on
the generic event-driven model instead, and the two paths are cross-checked
bit-exactly in the test suite on common workloads.

Event ties are resolved completion-first, then arrival, then rank-crossing;
for continuous workloads ties have probability zero, and the generic model
resolves them the same way.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


INF = np.inf

# rank_kernel modes
MODE_NP = 1        # non-preemptive by key (FIFO with key=seq, SJF, SPJF)
MODE_P_CONST = 2   # preemptive, rank constant in age (PSJF, PSPJF)
MODE_P_DECAY = 3   # preemptive, rank = key - age (SRPT, SPRPT)
MODE_TRAIL = 4     # decay plus an age gate blocking late preemption
MODE_BOUNCE = 5    # rank min(|key - age|, key) with scheduled crossings

# twoclass_kernel modes
TC_NONPREEMPT = 0
TC_PREEMPT = 1
TC_COMPOSITE = 2   # preemptive shorts, SPRPT within the long class


@njit(cache=True, nogil=True)
def _heap_push(hk, hs, hj, n, key, seq, job):
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if hk[p] < key or (hk[p] == key and hs[p] < seq):
            break
        hk[i] = hk[p]
        hs[i] = hs[p]
        hj[i] = hj[p]
        i = p
    hk[i] = key
    hs[i] = seq
    hj[i] = job
    return n + 1


@njit(cache=True, nogil=True)
def _heap_pop(hk, hs, hj, n):
    key = hk[0]
    seq = hs[0]
    job = hj[0]
    n -= 1
    if n > 0:
        lk = hk[n]
        ls = hs[n]
        lj = hj[n]
        i = 0
        while True:
            c = 2 * i + 1
            if c >= n:
                break
            r = c + 1
            if r < n and (hk[r] < hk[c] or (hk[r] == hk[c] and hs[r] < hs[c])):
                c = r
            if lk < hk[c] or (lk == hk[c] and ls <= hs[c]):
                break
            hk[i] = hk[c]
            hs[i] = hs[c]
            hj[i] = hj[c]
            i = c
        hk[i] = lk
        hs[i] = ls
        hj[i] = lj
    return key, seq, job, n


@njit(cache=True, nogil=True)
def _grow(hk, hs, hj):
    cap = hk.shape[0] * 2
    nk = np.empty(cap, np.float64)
    ns = np.empty(cap, np.int64)
    nj = np.empty(cap, np.int64)
    nk[: hk.shape[0]] = hk
    ns[: hs.shape[0]] = hs
    nj[: hj.shape[0]] = hj
    return nk, ns, nj


@njit(cache=True, nogil=True)
def rank_kernel(arr, size, key, mode, trail_c, lo, hi):
    """Single-server preemptive-priority loop for the plain rank policies.

    Returns (first_start, completion); entries stay -1 for jobs that had not
    completed when the measured quota [lo, hi) was met.
    """
    n = arr.shape[0]
    first = np.full(n, -1.0)
    comp = np.full(n, -1.0)
    rem = size.copy()

    hk = np.empty(1024, np.float64)
    hs = np.empty(1024, np.int64)
    hj = np.empty(1024, np.int64)
    hn = 0

    i = 0
    serving = -1
    t0 = 0.0
    val0 = 0.0
    a0 = 0.0
    comp_t = INF
    rel_t = INF
    done = 0
    need = hi - lo
    now = 0.0

    while done < need:
        ta = arr[i] if i < n else INF
        if comp_t == INF and rel_t == INF and ta == INF:
            break  # drained before the quota was met (short workload)

        if comp_t <= ta and comp_t <= rel_t:
            # completion
            now = comp_t
            j = serving
            comp[j] = now
            if lo <= j < hi:
                done += 1
            if hn > 0:
                v, s, jj, hn = _heap_pop(hk, hs, hj, hn)
                serving = jj
                if first[jj] < 0.0:
                    first[jj] = now
                t0 = now
                val0 = v
                a0 = size[jj] - rem[jj]
                comp_t = now + rem[jj]
            else:
                serving = -1
                comp_t = INF
            # reschedule the bounce crossing for the new segment; only a
            # strictly-future crossing counts, so an equal-rank pair cannot
            # swap the server back and forth without the clock advancing
            if mode == MODE_BOUNCE and serving >= 0 and hn > 0 and hk[0] < key[serving]:
                tc = t0 + (key[serving] + hk[0] - a0)
                rel_t = tc if (tc > now and tc < comp_t) else INF
            else:
                rel_t = INF
        elif ta <= rel_t:
            # arrival
            now = ta
            j = i
            i += 1
            if hn + 1 > hk.shape[0]:
                hk, hs, hj = _grow(hk, hs, hj)
            if serving < 0:
                serving = j
                first[j] = now
                t0 = now
                val0 = key[j]
                a0 = 0.0
                comp_t = now + rem[j]
                rel_t = INF
            elif mode == MODE_BOUNCE:
                # push the newcomer, then hand the server to the heap top when
                # it beats the served job's current rank. A rank that rose
                # through a waiting rank between events is displaced here at
                # the next event; seq breaks exact ties.
                a = a0 + (now - t0)
                d = key[serving] - a
                cur = abs(d)
                if cur > key[serving]:
                    cur = key[serving]
                hn = _heap_push(hk, hs, hj, hn, key[j], j, j)
                if hk[0] < cur or (hk[0] == cur and hs[0] < serving):
                    s = serving
                    rem[s] = comp_t - now
                    if hn + 1 > hk.shape[0]:
                        hk, hs, hj = _grow(hk, hs, hj)
                    hn = _heap_push(hk, hs, hj, hn, cur, s, s)
                    v, sq, jj, hn = _heap_pop(hk, hs, hj, hn)
                    serving = jj
                    if first[jj] < 0.0:
                        first[jj] = now
                    t0 = now
                    val0 = v
                    a0 = size[jj] - rem[jj]
                    comp_t = now + rem[jj]
                if hn > 0 and hk[0] < key[serving]:
                    tc = t0 + (key[serving] + hk[0] - a0)
                    rel_t = tc if (tc > now and tc < comp_t) else INF
                else:
                    rel_t = INF
            else:
                preempt = False
                if mode == MODE_P_CONST:
                    preempt = key[j] < val0
                elif mode == MODE_P_DECAY:
                    preempt = key[j] < val0 - (now - t0)
                elif mode == MODE_TRAIL:
                    if key[j] < val0 - (now - t0):
                        age = size[serving] - (comp_t - now)
                        preempt = age < trail_c * key[serving]
                if preempt:
                    s = serving
                    rem[s] = comp_t - now
                    if mode == MODE_P_CONST:
                        frozen = key[s]
                    else:
                        frozen = val0 - (now - t0)
                    hn = _heap_push(hk, hs, hj, hn, frozen, s, s)
                    serving = j
                    first[j] = now
                    t0 = now
                    val0 = key[j]
                    a0 = 0.0
                    comp_t = now + rem[j]
                else:
                    hn = _heap_push(hk, hs, hj, hn, key[j], j, j)
                rel_t = INF
        else:
            # bounce crossing: the rising rank of the served job meets the
            # best waiting rank; the waiting job takes the server.
            now = rel_t
            s = serving
            v, sq, jj, hn = _heap_pop(hk, hs, hj, hn)
            rem[s] = comp_t - now
            if hn + 1 > hk.shape[0]:
                hk, hs, hj = _grow(hk, hs, hj)
            # at the crossing the displaced job's rank equals the popped rank
            # exactly; freezing it at that value keeps the pair pinned to the
            # same float, so rounding noise cannot re-trigger a crossing
            hn = _heap_push(hk, hs, hj, hn, v, s, s)
            serving = jj
            if first[jj] < 0.0:
                first[jj] = now
            t0 = now
            val0 = v
            a0 = size[jj] - rem[jj]
            comp_t = now + rem[jj]
            if hn > 0 and hk[0] < key[serving]:
                tc = t0 + (key[serving] + hk[0] - a0)
                rel_t = tc if (tc > now and tc < comp_t) else INF
            else:
                rel_t = INF

    return first, comp


@njit(cache=True, nogil=True)
def twoclass_kernel(arr, size, key, bit, mode, lo, hi):
    """Two-class single server: shorts (bit 0) ahead of longs (bit 1).

    TC_NONPREEMPT serves FIFO within each class. TC_PREEMPT inserts arriving
    shorts at the front of the queue: they preempt whatever is running (long
    or short) and displaced jobs resume most-recent-first within the short
    class, head-of-class for longs. TC_COMPOSITE keeps shorts FIFO (a short
    only preempts a running long) and orders the long class by SPRPT on
    `key`.
    """
    n = arr.shape[0]
    first = np.full(n, -1.0)
    comp = np.full(n, -1.0)
    rem = size.copy()

    # short-class FIFO ring
    qs = np.empty(1024, np.int64)
    qs_h = 0
    qs_n = 0
    # long class: FIFO ring (np/p) or heap (composite)
    ql = np.empty(1024, np.int64)
    ql_h = 0
    ql_n = 0
    hk = np.empty(1024, np.float64)
    hs = np.empty(1024, np.int64)
    hj = np.empty(1024, np.int64)
    hn = 0

    i = 0
    serving = -1
    t0 = 0.0
    val0 = 0.0
    comp_t = INF
    done = 0
    need = hi - lo
    now = 0.0

    while done < need:
        ta = arr[i] if i < n else INF
        if comp_t == INF and ta == INF:
            break

        if comp_t <= ta:
            now = comp_t
            comp[serving] = now
            if lo <= serving < hi:
                done += 1
            if qs_n > 0:
                j = qs[qs_h % qs.shape[0]]
                qs_h += 1
                qs_n -= 1
                serving = j
                if first[j] < 0.0:
                    first[j] = now
                val0 = 0.0
                t0 = now
                comp_t = now + rem[j]
            elif mode == TC_COMPOSITE and hn > 0:
                v, s, j, hn = _heap_pop(hk, hs, hj, hn)
                serving = j
                if first[j] < 0.0:
                    first[j] = now
                val0 = v
                t0 = now
                comp_t = now + rem[j]
            elif mode != TC_COMPOSITE and ql_n > 0:
                j = ql[ql_h % ql.shape[0]]
                ql_h += 1
                ql_n -= 1
                serving = j
                if first[j] < 0.0:
                    first[j] = now
                t0 = now
                comp_t = now + rem[j]
            else:
                serving = -1
                comp_t = INF
        else:
            now = ta
            j = i
            i += 1
            if serving < 0:
                serving = j
                first[j] = now
                val0 = key[j] if (mode == TC_COMPOSITE and bit[j] == 1) else 0.0
                t0 = now
                comp_t = now + rem[j]
            elif bit[j] == 0:
                preempt_long = bit[serving] == 1 and mode != TC_NONPREEMPT
                preempt_short = bit[serving] == 0 and mode == TC_PREEMPT
                if preempt_long or preempt_short:
                    # front insertion: the newcomer takes the server
                    s = serving
                    rem[s] = comp_t - now
                    if preempt_short:
                        # displaced short resumes most-recent-first
                        if qs_n + 1 > qs.shape[0]:
                            nq = np.empty(qs.shape[0] * 2, np.int64)
                            for k in range(qs_n):
                                nq[k] = qs[(qs_h + k) % qs.shape[0]]
                            qs = nq
                            qs_h = 0
                        qs_h -= 1
                        qs[qs_h % qs.shape[0]] = s
                        qs_n += 1
                    elif mode == TC_COMPOSITE:
                        if hn + 1 > hk.shape[0]:
                            hk, hs, hj = _grow(hk, hs, hj)
                        hn = _heap_push(hk, hs, hj, hn, val0 - (now - t0), s, s)
                    else:
                        # displaced long resumes at the head of its class
                        if ql_n + 1 > ql.shape[0]:
                            nq = np.empty(ql.shape[0] * 2, np.int64)
                            for k in range(ql_n):
                                nq[k] = ql[(ql_h + k) % ql.shape[0]]
                            ql = nq
                            ql_h = 0
                        ql_h -= 1
                        ql[ql_h % ql.shape[0]] = s
                        ql_n += 1
                    serving = j
                    first[j] = now
                    val0 = 0.0
                    t0 = now
                    comp_t = now + rem[j]
                else:
                    if qs_n + 1 > qs.shape[0]:
                        nq = np.empty(qs.shape[0] * 2, np.int64)
                        for k in range(qs_n):
                            nq[k] = qs[(qs_h + k) % qs.shape[0]]
                        qs = nq
                        qs_h = 0
                    qs[(qs_h + qs_n) % qs.shape[0]] = j
                    qs_n += 1
            else:
                if (
                    mode == TC_COMPOSITE
                    and bit[serving] == 1
                    and key[j] < val0 - (now - t0)
                ):
                    # SPRPT preemption within the long class
                    s = serving
                    rem[s] = comp_t - now
                    if hn + 1 > hk.shape[0]:
                        hk, hs, hj = _grow(hk, hs, hj)
                    hn = _heap_push(hk, hs, hj, hn, val0 - (now - t0), s, s)
                    serving = j
                    first[j] = now
                    val0 = key[j]
                    t0 = now
                    comp_t = now + rem[j]
                elif mode == TC_COMPOSITE:
                    if hn + 1 > hk.shape[0]:
                        hk, hs, hj = _grow(hk, hs, hj)
                    hn = _heap_push(hk, hs, hj, hn, key[j], j, j)
                else:
                    if ql_n + 1 > ql.shape[0]:
                        nq = np.empty(ql.shape[0] * 2, np.int64)
                        for k in range(ql_n):
                            nq[k] = ql[(ql_h + k) % ql.shape[0]]
                        ql = nq
                        ql_h = 0
                    ql[(ql_h + ql_n) % ql.shape[0]] = j
                    ql_n += 1

    return first, comp


@njit(cache=True, nogil=True)
def cluster_kernel(arr, size, bit, cand, nq, preemptive, lo, hi):
    """Power-of-d cluster: route each arrival to the candidate queue holding
    the fewest jobs of the same predicted class (ties to the lowest index),
    then run a two-class server per queue. Jobs never migrate."""
    n = arr.shape[0]
    d = cand.shape[1]
    first = np.full(n, -1.0)
    comp = np.full(n, -1.0)
    rem = size.copy()

    nxt = np.full(n, -1, np.int64)          # waiting-list links
    s_head = np.full(nq, -1, np.int64)
    s_tail = np.full(nq, -1, np.int64)
    l_head = np.full(nq, -1, np.int64)
    l_tail = np.full(nq, -1, np.int64)
    cnt = np.zeros((2, nq), np.int64)       # per-class counts incl. in service
    serving = np.full(nq, -1, np.int64)
    comp_time = np.full(nq, INF, np.float64)

    # completion-event heap with lazy invalidation via comp_time
    et = np.empty(1024, np.float64)
    eq = np.empty(1024, np.int64)
    en = 0

    i = 0
    done = 0
    need = hi - lo
    now = 0.0

    while done < need:
        ta = arr[i] if i < n else INF
        # peel stale completion entries
        while en > 0 and et[0] != comp_time[eq[0]]:
            _, _, _, en = _heap_pop(et, eq, eq, en)
        tc = et[0] if en > 0 else INF
        if ta == INF and tc == INF:
            break

        if tc <= ta:
            now = tc
            q = eq[0]
            _, _, _, en = _heap_pop(et, eq, eq, en)
            j = serving[q]
            comp[j] = now
            cnt[bit[j], q] -= 1
            if lo <= j < hi:
                done += 1
            nj = -1
            if s_head[q] >= 0:
                nj = s_head[q]
                s_head[q] = nxt[nj]
                if s_head[q] < 0:
                    s_tail[q] = -1
            elif l_head[q] >= 0:
                nj = l_head[q]
                l_head[q] = nxt[nj]
                if l_head[q] < 0:
                    l_tail[q] = -1
            if nj >= 0:
                serving[q] = nj
                if first[nj] < 0.0:
                    first[nj] = now
                comp_time[q] = now + rem[nj]
                if en + 1 > et.shape[0]:
                    et2 = np.empty(et.shape[0] * 2, np.float64)
                    eq2 = np.empty(et.shape[0] * 2, np.int64)
                    et2[:en] = et[:en]
                    eq2[:en] = eq[:en]
                    et, eq = et2, eq2
                en = _heap_push(et, eq, eq, en, comp_time[q], q, q)
            else:
                serving[q] = -1
                comp_time[q] = INF
        else:
            now = ta
            j = i
            i += 1
            c = bit[j]
            # route: fewest same-class jobs among the candidates
            best_q = cand[j, 0]
            best_c = cnt[c, best_q]
            for k in range(1, d):
                qq = cand[j, k]
                cc = cnt[c, qq]
                if cc < best_c or (cc == best_c and qq < best_q):
                    best_q = qq
                    best_c = cc
            q = best_q
            cnt[c, q] += 1
            if serving[q] < 0:
                serving[q] = j
                first[j] = now
                comp_time[q] = now + rem[j]
                if en + 1 > et.shape[0]:
                    et2 = np.empty(et.shape[0] * 2, np.float64)
                    eq2 = np.empty(et.shape[0] * 2, np.int64)
                    et2[:en] = et[:en]
                    eq2[:en] = eq[:en]
                    et, eq = et2, eq2
                en = _heap_push(et, eq, eq, en, comp_time[q], q, q)
            elif c == 0 and preemptive:
                # front insertion: the short takes the server; the displaced
                # job resumes at the head of its own class
                s = serving[q]
                rem[s] = comp_time[q] - now
                if bit[s] == 1:
                    nxt[s] = l_head[q]
                    l_head[q] = s
                    if l_tail[q] < 0:
                        l_tail[q] = s
                else:
                    nxt[s] = s_head[q]
                    s_head[q] = s
                    if s_tail[q] < 0:
                        s_tail[q] = s
                serving[q] = j
                first[j] = now
                comp_time[q] = now + rem[j]
                if en + 1 > et.shape[0]:
                    et2 = np.empty(et.shape[0] * 2, np.float64)
                    eq2 = np.empty(et.shape[0] * 2, np.int64)
                    et2[:en] = et[:en]
                    eq2[:en] = eq[:en]
                    et, eq = et2, eq2
                en = _heap_push(et, eq, eq, en, comp_time[q], q, q)
            else:
                nxt[j] = -1
                if c == 0:
                    if s_tail[q] < 0:
                        s_head[q] = j
                    else:
                        nxt[s_tail[q]] = j
                    s_tail[q] = j
                else:
                    if l_tail[q] < 0:
                        l_head[q] = j
                    else:
                        nxt[l_tail[q]] = j
                    l_tail[q] = j

    return first, comp
