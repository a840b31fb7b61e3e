# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. ``_fallback.py`` mirrors every function here."""

import numpy as np

from cython.parallel cimport parallel, prange
from libc.stdint cimport int16_t, int32_t, int64_t, uint16_t, uint32_t, uint64_t, uint8_t
from libc.stdlib cimport calloc, free, malloc
from libc.string cimport memmove

BACKEND = "compiled"

cdef packed struct Slot:
    uint32_t id
    uint16_t hash
    uint16_t dist

ctypedef fused real:
    float
    double

cdef uint32_t EMPTY = 0xFFFFFFFF


# -- distances ----------------------------------------------------------------

cdef inline float _sqdist(const float* a, const float* b, Py_ssize_t d) noexcept nogil:
    cdef float s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0
    cdef float t
    cdef Py_ssize_t i = 0
    while i + 8 <= d:
        t = a[i] - b[i]; s0 += t * t
        t = a[i + 1] - b[i + 1]; s1 += t * t
        t = a[i + 2] - b[i + 2]; s2 += t * t
        t = a[i + 3] - b[i + 3]; s3 += t * t
        t = a[i + 4] - b[i + 4]; s4 += t * t
        t = a[i + 5] - b[i + 5]; s5 += t * t
        t = a[i + 6] - b[i + 6]; s6 += t * t
        t = a[i + 7] - b[i + 7]; s7 += t * t
        i += 8
    while i < d:
        t = a[i] - b[i]; s0 += t * t
        i += 1
    return ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7))


cdef inline float _negdot(const float* a, const float* b, Py_ssize_t d) noexcept nogil:
    cdef float s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0
    cdef Py_ssize_t i = 0
    while i + 8 <= d:
        s0 += a[i] * b[i]
        s1 += a[i + 1] * b[i + 1]
        s2 += a[i + 2] * b[i + 2]
        s3 += a[i + 3] * b[i + 3]
        s4 += a[i + 4] * b[i + 4]
        s5 += a[i + 5] * b[i + 5]
        s6 += a[i + 6] * b[i + 6]
        s7 += a[i + 7] * b[i + 7]
        i += 8
    while i < d:
        s0 += a[i] * b[i]
        i += 1
    return -(((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7)))


cdef inline float _dist(const float* a, const float* b, Py_ssize_t d, int mips) noexcept nogil:
    if mips:
        return _negdot(a, b, d)
    return _sqdist(a, b, d)


def distances_to(const float[:, ::1] X, const float[::1] q, const int64_t[::1] ids, int mips):
    """Kernel-precision dissimilarities from ``q`` to ``X[ids]``."""
    cdef Py_ssize_t i, m = ids.shape[0], d = X.shape[1]
    out = np.empty(m, dtype=np.float32)
    cdef float[::1] o = out
    with nogil:
        for i in range(m):
            o[i] = _dist(&q[0], &X[ids[i], 0], d, mips)
    return out


# -- in-leaf k nearest --------------------------------------------------------

cdef inline bint _closer(double v, uint32_t g, double w, uint32_t h) noexcept nogil:
    return v < w or (v == w and g < h)


def pick_knn(real[:, ::1] D, const uint32_t[::1] gids, int k):
    """Leaf-local positions of each row's ``k`` nearest co-members.

    Order is ``(distance, global id)``; the row's own position is skipped.
    """
    cdef Py_ssize_t m = D.shape[0]
    cdef Py_ssize_t kk = min(<Py_ssize_t>k, m - 1)
    if kk < 0:
        kk = 0
    out = np.empty((m, kk), dtype=np.int32)
    if kk == 0:
        return out
    cdef int32_t[:, ::1] o = out
    cdef Py_ssize_t i, j, cnt, pos
    cdef double v
    cdef uint32_t g
    with nogil:
        for i in range(m):
            cnt = 0
            for j in range(m):
                if j == i:
                    continue
                v = D[i, j]
                g = gids[j]
                if cnt == kk:
                    if not _closer(v, g, D[i, o[i, kk - 1]], gids[o[i, kk - 1]]):
                        continue
                    pos = kk - 1
                else:
                    pos = cnt
                    cnt += 1
                while pos > 0 and _closer(v, g, D[i, o[i, pos - 1]], gids[o[i, pos - 1]]):
                    o[i, pos] = o[i, pos - 1]
                    pos -= 1
                o[i, pos] = <int32_t>j
    return out


# -- residual hashing and reservoirs -------------------------------------------

def residual_hashes(const float[:, ::1] sk, const uint32_t[::1] src, const uint32_t[::1] dst):
    """Bit ``i`` (most significant first) is set iff ``sk[dst, i] >= sk[src, i]``."""
    cdef Py_ssize_t e, i, E = src.shape[0], m = sk.shape[1]
    out = np.empty(E, dtype=np.uint16)
    cdef uint16_t[::1] o = out
    cdef uint32_t h
    with nogil:
        for e in range(E):
            h = 0
            for i in range(m):
                h = (h << 1) | (sk[dst[e], i] >= sk[src[e], i])
            o[e] = <uint16_t>h
    return out


cdef inline uint64_t _rank(uint16_t dist, uint32_t cid) noexcept nogil:
    # bf16 bits -> order-preserving unsigned key, then id as tie-break.
    cdef uint64_t key
    if dist & 0x8000:
        key = dist ^ 0xFFFF
    else:
        key = dist | 0x8000
    return (key << 32) | cid


cdef int _insert(Slot* row, uint16_t* count, int16_t* furthest, Py_ssize_t cap,
                 uint32_t cid, uint16_t h, uint16_t dist) noexcept nogil:
    """One reservoir insertion. 0 rejected, 1 inserted, 2 replaced, 3 evicted."""
    cdef Py_ssize_t n = count[0]
    cdef Py_ssize_t lo = 0, hi = n, mid, f, i
    cdef uint64_t r = _rank(dist, cid), best
    while lo < hi:
        mid = (lo + hi) >> 1
        if row[mid].hash < h:
            lo = mid + 1
        else:
            hi = mid
    if lo < n and row[lo].hash == h:
        if r < _rank(row[lo].dist, row[lo].id):
            row[lo].id = cid
            row[lo].dist = dist
            furthest[0] = -1
            return 2
        return 0
    if n < cap:
        memmove(&row[lo + 1], &row[lo], (n - lo) * sizeof(Slot))
        row[lo].id = cid
        row[lo].hash = h
        row[lo].dist = dist
        count[0] = <uint16_t>(n + 1)
        furthest[0] = -1
        return 1
    f = furthest[0]
    if f < 0:
        f = 0
        best = _rank(row[0].dist, row[0].id)
        for i in range(1, n):
            if _rank(row[i].dist, row[i].id) > best:
                best = _rank(row[i].dist, row[i].id)
                f = i
        furthest[0] = <int16_t>f
    if r < _rank(row[f].dist, row[f].id):
        memmove(&row[f], &row[f + 1], (n - 1 - f) * sizeof(Slot))
        if lo > f:
            lo -= 1
        memmove(&row[lo + 1], &row[lo], (n - 1 - lo) * sizeof(Slot))
        row[lo].id = cid
        row[lo].hash = h
        row[lo].dist = dist
        furthest[0] = -1
        return 3
    return 0


def stream_edges(Slot[:, ::1] slots, uint16_t[::1] counts, int16_t[::1] furthest,
                 const uint32_t[::1] src, const uint32_t[::1] dst,
                 const uint16_t[::1] hashes, const uint16_t[::1] dists, int nthreads=1):
    """Insert edge ``e`` into the reservoir of ``src[e]``.

    Reservoirs are striped by ``src % nthreads``; each stripe is owned by one
    thread, so no reservoir is ever touched concurrently.
    Returns counts of [rejected, inserted, replaced, evicted].
    """
    cdef Py_ssize_t e, E = src.shape[0], cap = slots.shape[1]
    cdef int s, rc
    cdef uint32_t p
    stats = np.zeros((max(nthreads, 1), 4), dtype=np.int64)
    cdef int64_t[:, ::1] st = stats
    if E == 0:
        return stats.sum(axis=0)
    if nthreads <= 1:
        with nogil:
            for e in range(E):
                p = src[e]
                rc = _insert(&slots[p, 0], &counts[p], &furthest[p], cap, dst[e], hashes[e], dists[e])
                st[0, rc] += 1
    else:
        for s in prange(nthreads, nogil=True, num_threads=nthreads, schedule="static", chunksize=1):
            for e in range(E):
                p = src[e]
                if <int>(p % <uint32_t>nthreads) != s:
                    continue
                rc = _insert(&slots[p, 0], &counts[p], &furthest[p], cap, dst[e], hashes[e], dists[e])
                st[s, rc] += 1
    return stats.sum(axis=0)


# -- final prune ----------------------------------------------------------------

def prune_all(const float[:, ::1] X, int mips, Slot[:, ::1] slots, const uint16_t[::1] counts,
              double alpha, bint use_alpha, int R, int nthreads=1):
    """Lazy RobustPrune of every reservoir, distances recomputed in float32."""
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], cap = slots.shape[1]
    adj_arr = np.full((n, R), EMPTY, dtype=np.uint32)
    deg_arr = np.zeros(n, dtype=np.uint32)
    cdef uint32_t[:, ::1] adj = adj_arr
    cdef uint32_t[::1] deg = deg_arr
    cdef Py_ssize_t p, i, j, c, cnt, nadm
    cdef uint32_t* ids
    cdef float* ds
    cdef uint32_t cid
    cdef float cd
    cdef bint ok
    with nogil, parallel(num_threads=max(nthreads, 1)):
        ids = <uint32_t*>malloc(cap * sizeof(uint32_t))
        ds = <float*>malloc(cap * sizeof(float))
        for p in prange(n, schedule="dynamic", chunksize=64):
            cnt = counts[p]
            for i in range(cnt):
                cid = slots[p, i].id
                cd = _dist(&X[p, 0], &X[cid, 0], d, mips)
                j = i
                while j > 0 and (cd < ds[j - 1] or (cd == ds[j - 1] and cid < ids[j - 1])):
                    ids[j] = ids[j - 1]
                    ds[j] = ds[j - 1]
                    j = j - 1
                ids[j] = cid
                ds[j] = cd
            nadm = 0
            for c in range(cnt):
                if nadm >= R:
                    break
                ok = True
                if use_alpha:
                    for j in range(nadm):
                        if alpha * <double>_dist(&X[adj[p, j], 0], &X[ids[c], 0], d, mips) < <double>ds[c]:
                            ok = False
                            break
                if ok:
                    adj[p, nadm] = ids[c]
                    nadm = nadm + 1
            deg[p] = <uint32_t>nadm
        free(ids)
        free(ds)
    return adj_arr, deg_arr


# -- beam search ----------------------------------------------------------------

def beam_search_batch(const uint32_t[:, ::1] adj, const uint32_t[::1] deg, const float[:, ::1] X,
                      int mips, const float[:, ::1] Q, int L, const uint32_t[::1] starts, int nthreads=1):
    """Beam search for row ``i`` of ``Q`` from ``starts[i]``; results padded with -1 / inf.

    A point is evaluated at most once per query. Skipping points that were
    evaluated before does not change the result: the beam's worst entry only
    improves, so a point that fell out of the beam could never re-enter it.
    """
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], nq = Q.shape[0]
    ids_arr = np.full((nq, L), -1, dtype=np.int64)
    dists_arr = np.full((nq, L), np.inf, dtype=np.float32)
    visited_arr = np.zeros(nq, dtype=np.int64)
    cmps_arr = np.zeros(nq, dtype=np.int64)
    cdef int64_t[:, ::1] rid = ids_arr
    cdef float[:, ::1] rd = dists_arr
    cdef int64_t[::1] rvis = visited_arr
    cdef int64_t[::1] rcmp = cmps_arr
    cdef Py_ssize_t qi, i, j, size, pos
    cdef uint32_t* vis
    cdef uint32_t* seen
    cdef uint32_t* bi
    cdef float* bd
    cdef uint32_t gen, p, u, start
    cdef float du
    cdef int64_t nvis, ncmp
    with nogil, parallel(num_threads=max(nthreads, 1)):
        vis = <uint32_t*>calloc(n, sizeof(uint32_t))
        seen = <uint32_t*>calloc(n, sizeof(uint32_t))
        bi = <uint32_t*>malloc((L + 1) * sizeof(uint32_t))
        bd = <float*>malloc((L + 1) * sizeof(float))
        for qi in prange(nq, schedule="dynamic", chunksize=4):
            # per-query tag, so the marker arrays never need clearing
            gen = <uint32_t>(qi + 1)
            start = starts[qi]
            bi[0] = start
            bd[0] = _dist(&Q[qi, 0], &X[start, 0], d, mips)
            seen[start] = gen
            size = 1
            ncmp = 1
            nvis = 0
            while True:
                i = 0
                while i < size and vis[bi[i]] == gen:
                    i = i + 1
                if i == size:
                    break
                p = bi[i]
                vis[p] = gen
                nvis = nvis + 1
                for j in range(deg[p]):
                    u = adj[p, j]
                    if seen[u] == gen:
                        continue
                    seen[u] = gen
                    du = _dist(&Q[qi, 0], &X[u, 0], d, mips)
                    ncmp = ncmp + 1
                    if size == L and not (du < bd[L - 1] or (du == bd[L - 1] and u < bi[L - 1])):
                        continue
                    pos = size
                    while pos > 0 and (du < bd[pos - 1] or (du == bd[pos - 1] and u < bi[pos - 1])):
                        bd[pos] = bd[pos - 1]
                        bi[pos] = bi[pos - 1]
                        pos = pos - 1
                    bd[pos] = du
                    bi[pos] = u
                    if size < L:
                        size = size + 1
            for i in range(size):
                rid[qi, i] = bi[i]
                rd[qi, i] = bd[i]
            rvis[qi] = nvis
            rcmp[qi] = ncmp
        free(vis)
        free(seen)
        free(bi)
        free(bd)
    return ids_arr, dists_arr, visited_arr, cmps_arr
