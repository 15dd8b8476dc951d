"""Monte-Carlo kernels for the restart simulator.

Every trial reseeds the legacy MT19937 stream (``np.random.seed``), which
numba reproduces bit-for-bit, so the compiled and interpreted paths return
identical batches for identical seeds.
"""
import numpy as np

from ._accel import njit
from .ttl import zeta2_invert

# "never terminates" sentinel; far above any reachable cap
INF_TICK = np.int64(1) << np.int64(62)

SINGLE = 0
PARALLEL = 1
FIXED = 2
COUNTER = 3
ZETA2 = 4
BIN = 5
WIDE_UNIT = 6
WIDE_DOUBLING = 7
COUNTER_CACHE = 8

BIN_MAX_VALUE = np.int64(1) << np.int64(61)


@njit
def draw_runtime(ticks, cum):
    j = np.searchsorted(cum, np.random.random(), side="right")
    if j >= ticks.shape[0]:
        return INF_TICK
    return ticks[j]


@njit
def draw_bin():
    value = np.int64(1)
    while np.random.random() >= 0.5:
        bit = 1 if np.random.random() >= 0.5 else 0
        value = 2 * value + bit
        if value >= BIN_MAX_VALUE:
            # 2^-61 event; clamp instead of overflowing
            return BIN_MAX_VALUE
    return value


@njit
def _next_ttl(code, param, luby, zcdf):
    if code == FIXED:
        return np.int64(param)
    if code == SINGLE:
        return INF_TICK
    if code == ZETA2:
        return np.int64(zeta2_invert(np.random.random(), zcdf))
    if code == BIN:
        return draw_bin()
    # counter: luby = [counter, next power]
    value = luby[1]
    luby[1] *= 2
    if luby[0] % luby[1] != 0:
        luby[0] += 1
        luby[1] = 1
    return value


@njit
def _sat_add(a, b):
    if b >= INF_TICK - a:
        return INF_TICK
    return a + b


@njit
def ttl_trial(code, param, workers, ticks, cum, zcdf, cap, out):
    """Stop/start strategies with ``workers`` copies advancing in lock-step.

    Writes (success, time, work, attempts, peak_cache) into ``out``.
    """
    end = np.empty(workers, dtype=np.int64)
    ok = np.zeros(workers, dtype=np.bool_)
    luby = np.ones(2, dtype=np.int64)
    attempts = 0
    for w in range(workers):
        ttl = _next_ttl(code, param, luby, zcdf)
        x = draw_runtime(ticks, cum)
        attempts += 1
        ok[w] = x <= ttl
        end[w] = min(x, ttl)
    while True:
        w = 0
        for v in range(1, workers):
            if end[v] < end[w]:
                w = v
        e = end[w]
        if e > cap:
            out[0] = 0
            out[1] = cap
            out[2] = cap * workers
            out[3] = attempts
            out[4] = 0
            return
        if ok[w]:
            out[0] = 1
            out[1] = e
            out[2] = e * workers
            out[3] = attempts
            out[4] = 0
            return
        ttl = _next_ttl(code, param, luby, zcdf)
        x = draw_runtime(ticks, cum)
        attempts += 1
        ok[w] = x <= ttl
        end[w] = _sat_add(e, min(x, ttl))


@njit
def parallel_trial(workers, ticks, cum, cap, out):
    best = INF_TICK
    for _ in range(workers):
        x = draw_runtime(ticks, cum)
        if x < best:
            best = x
    out[3] = workers
    out[4] = 0
    if best <= cap:
        out[0] = 1
        out[1] = best
        out[2] = best * workers
    else:
        out[0] = 0
        out[1] = cap
        out[2] = cap * workers


# --- array-backed binary heap keyed on (activation, copy id) ------------


@njit
def _heap_less(hk, hi, a, b):
    return hk[a] < hk[b] or (hk[a] == hk[b] and hi[a] < hi[b])


@njit
def _heap_push(hk, hi, size, key, cid):
    j = size
    hk[j] = key
    hi[j] = cid
    while j > 0:
        parent = (j - 1) // 2
        if _heap_less(hk, hi, j, parent):
            hk[j], hk[parent] = hk[parent], hk[j]
            hi[j], hi[parent] = hi[parent], hi[j]
            j = parent
        else:
            break
    return size + 1


@njit
def _heap_pop(hk, hi, size):
    size -= 1
    hk[0] = hk[size]
    hi[0] = hi[size]
    j = 0
    while True:
        left = 2 * j + 1
        if left >= size:
            break
        c = left
        if left + 1 < size and _heap_less(hk, hi, left + 1, left):
            c = left + 1
        if _heap_less(hk, hi, c, j):
            hk[j], hk[c] = hk[c], hk[j]
            hi[j], hi[c] = hi[c], hi[j]
            j = c
        else:
            break
    return size


@njit
def _grow(a, n):
    b = np.zeros(n, dtype=a.dtype)
    b[: a.shape[0]] = a
    return b


@njit
def wide_trial(doubling, ticks, cum, cap, out):
    """Virtual parallelism: copy i runs at speed 1/i.

    Unit slots: every copy due at lead time t gets one tick and success is
    observed at the end of that lead-time round. Doubling slots: a copy
    with r accumulated ticks is advanced to max(1, 2r) and may succeed
    mid-slot.
    """
    n = 64
    run = np.zeros(n + 1, dtype=np.int64)
    hidden = np.zeros(n + 1, dtype=np.int64)
    hk = np.zeros(n, dtype=np.int64)
    hi = np.zeros(n, dtype=np.int64)
    size = 0
    copies = 0
    work = np.int64(0)
    lead = np.int64(0)
    succeeded = False
    while True:
        new_key = np.int64(copies + 1)
        take_new = size == 0 or new_key < hk[0]
        if take_new:
            key = new_key
            cid = copies + 1
        else:
            key = hk[0]
            cid = hi[0]
        if not doubling and key > lead:
            if succeeded:
                break
            lead = key
        if take_new:
            copies += 1
            if copies >= run.shape[0]:
                run = _grow(run, 2 * run.shape[0])
                hidden = _grow(hidden, 2 * hidden.shape[0])
            hidden[cid] = draw_runtime(ticks, cum)
        else:
            size = _heap_pop(hk, hi, size)
        r = run[cid]
        target = r + 1
        if doubling and r > 0:
            target = 2 * r
        if doubling and hidden[cid] <= target:
            need = hidden[cid] - r
            if work + need > cap:
                out[0] = 0
                out[1] = cap
                out[2] = cap
                out[3] = copies
                out[4] = size
                return
            work += need
            run[cid] = hidden[cid]
            succeeded = True
            break
        grant = target - r
        if work + grant > cap:
            if succeeded:
                break
            out[0] = 0
            out[1] = cap
            out[2] = cap
            out[3] = copies
            out[4] = size
            return
        work += grant
        run[cid] = target
        if run[cid] >= hidden[cid]:
            succeeded = True
        if doubling:
            next_key = cid * 2 * target
        else:
            next_key = cid * (target + 1)
        if size >= hk.shape[0]:
            hk = _grow(hk, 2 * hk.shape[0])
            hi = _grow(hi, 2 * hi.shape[0])
        size = _heap_push(hk, hi, size, next_key, cid)
    out[0] = 1
    out[1] = work
    out[2] = work
    out[3] = copies
    out[4] = size


@njit
def counter_cache_trial(capacity, ticks, cum, cap, out):
    """Counter search whose expired runs are parked and later extended.

    A TTL t resumes the parked run with the largest accumulated time below
    t. A full cache keeps the heaviest runs; the lightest is killed.
    """
    acc = np.zeros(capacity, dtype=np.int64)
    hid = np.zeros(capacity, dtype=np.int64)
    size = 0
    peak = 0
    luby = np.ones(2, dtype=np.int64)
    zdummy = np.zeros(1)
    work = np.int64(0)
    attempts = 0
    while True:
        t = _next_ttl(COUNTER, 0, luby, zdummy)
        j = -1
        for k in range(size):
            if acc[k] < t and (j < 0 or acc[k] > acc[j]):
                j = k
        if j >= 0:
            a = acc[j]
            x = hid[j]
            for k in range(j, size - 1):
                acc[k] = acc[k + 1]
                hid[k] = hid[k + 1]
            size -= 1
        else:
            a = np.int64(0)
            x = draw_runtime(ticks, cum)
        attempts += 1
        if x <= t:
            need = x - a
            if work + need > cap:
                break
            work += need
            out[0] = 1
            out[1] = work
            out[2] = work
            out[3] = attempts
            out[4] = peak
            return
        grant = t - a
        if work + grant > cap:
            break
        work += grant
        # park the run; on overflow the lightest of cache + newcomer dies
        if size == capacity:
            m = 0
            for k in range(1, size):
                if acc[k] < acc[m]:
                    m = k
            if acc[m] >= t:
                continue
            for k in range(m, size - 1):
                acc[k] = acc[k + 1]
                hid[k] = hid[k + 1]
            size -= 1
        acc[size] = t
        hid[size] = x
        size += 1
        if size > peak:
            peak = size
    out[0] = 0
    out[1] = cap
    out[2] = cap
    out[3] = attempts
    out[4] = peak


@njit
def run_batch(code, param, workers, ticks, cum, zcdf, cap, seeds):
    """Run one trial per seed; returns an (n, 5) int64 table."""
    n = seeds.shape[0]
    res = np.zeros((n, 5), dtype=np.int64)
    for i in range(n):
        np.random.seed(seeds[i])
        row = res[i]
        if code == PARALLEL:
            parallel_trial(workers, ticks, cum, cap, row)
        elif code == WIDE_UNIT:
            wide_trial(False, ticks, cum, cap, row)
        elif code == WIDE_DOUBLING:
            wide_trial(True, ticks, cum, cap, row)
        elif code == COUNTER_CACHE:
            counter_cache_trial(param, ticks, cum, cap, row)
        else:
            ttl_trial(code, param, workers, ticks, cum, zcdf, cap, row)
    return res
