# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled greedy capacity-capped assignment kernel.

Semantics are identical to subtail._greedy_fallback.greedy_capacity_assign:
repeatedly take the globally best (sample, open center) similarity, ties
broken by lowest sample index then lowest center index, closing a center
once it holds `capacity` samples. Only comparisons are performed on the
similarity values, so compiled and fallback paths agree bitwise.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def greedy_capacity_assign(double[:, ::1] sim, long capacity):
    """Assign each row of `sim` (samples x centers) to a center.

    Returns an int64 array of center indices, one per sample.
    """
    cdef Py_ssize_t n = sim.shape[0]
    cdef Py_ssize_t m = sim.shape[1]
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if capacity * m < n:
        raise ValueError("capacity * centers < samples: assignment infeasible")

    assign_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] assign = assign_arr
    counts_arr = np.zeros(m, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    open_arr = np.ones(m, dtype=np.uint8)
    cdef unsigned char[::1] is_open = open_arr
    done_arr = np.zeros(n, dtype=np.uint8)
    cdef unsigned char[::1] done = done_arr
    # Per-sample best open center, maintained incrementally; a full rescan
    # of a row happens only when that row's best center closes.
    best_j_arr = np.full(n, -1, dtype=np.int64)
    cdef long long[::1] best_j = best_j_arr
    best_v_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] best_v = best_v_arr

    cdef Py_ssize_t i, j, step, gi, gj, closed
    cdef double v, gv
    cdef bint found

    for i in range(n):
        best_j[i] = 0
        best_v[i] = sim[i, 0]
        for j in range(1, m):
            v = sim[i, j]
            if v > best_v[i]:
                best_v[i] = v
                best_j[i] = j

    for step in range(n):
        found = False
        gi = -1
        gj = -1
        gv = 0.0
        for i in range(n):
            if done[i]:
                continue
            if not found or best_v[i] > gv:
                found = True
                gv = best_v[i]
                gi = i
                gj = best_j[i]
        if not found:
            raise RuntimeError("greedy assignment ran out of samples early")

        assign[gi] = gj
        done[gi] = 1
        counts[gj] += 1
        if counts[gj] >= capacity:
            is_open[gj] = 0
            closed = gj
            for i in range(n):
                if done[i] or best_j[i] != closed:
                    continue
                best_j[i] = -1
                for j in range(m):
                    if not is_open[j]:
                        continue
                    v = sim[i, j]
                    if best_j[i] < 0 or v > best_v[i]:
                        best_v[i] = v
                        best_j[i] = j
                if best_j[i] < 0:
                    raise RuntimeError("all centers closed with samples remaining")

    return assign_arr
