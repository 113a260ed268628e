# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled accumulation loops for target-centered interaction grids.

Semantics must stay bit-identical to the pure-Python fallback in
``_accum.py``.  Headings accumulate as unit vectors (dx/r, dy/r) rather
than cos/sin of atan2, so the loop uses only IEEE-exact operations
(+ * / sqrt floor) and cannot drift from the fallback on any libm or
compiler (paired sin/cos calls would get folded into glibc sincos, which
rounds differently in rare cases).  FMA contraction is disabled in the
build flags for the same reason.
"""

from libc.math cimport sqrt, floor


def accumulate_dynamic(double[:, ::1] rel_pos, double[:, ::1] rel_off,
                       double[:, ::1] nbr_off, double dt,
                       double[:, ::1] sin_sum, double[:, ::1] cos_sum,
                       double[:, ::1] speed_sum, double[:, ::1] count):
    cdef Py_ssize_t m, n = rel_pos.shape[0]
    cdef Py_ssize_t W = sin_sum.shape[0], H = sin_sum.shape[1]
    cdef double half_w = 0.5 * W, half_h = 0.5 * H
    cdef double u, v, dx, dy, r, wf, hf
    cdef Py_ssize_t w, h
    for m in range(n):
        u = rel_pos[m, 0] + rel_off[m, 0]
        v = rel_pos[m, 1] + rel_off[m, 1]
        wf = floor(half_w + u)
        hf = floor(half_h + v)
        if wf < 0 or wf >= W or hf < 0 or hf >= H:
            continue
        w = <Py_ssize_t> wf
        h = <Py_ssize_t> hf
        dx = nbr_off[m, 0]
        dy = nbr_off[m, 1]
        r = sqrt(dx * dx + dy * dy)
        if r == 0.0:
            # zero-motion convention: heading 0 -> unit vector (1, 0)
            cos_sum[w, h] += 1.0
        else:
            sin_sum[w, h] += dy / r
            cos_sum[w, h] += dx / r
        speed_sum[w, h] += r / dt
        count[w, h] += 1.0


def accumulate_occupancy(double[:, ::1] rel_pos, double[:, ::1] occ_count):
    cdef Py_ssize_t m, n = rel_pos.shape[0]
    cdef Py_ssize_t W = occ_count.shape[0], H = occ_count.shape[1]
    cdef double half_w = 0.5 * W, half_h = 0.5 * H
    cdef double wf, hf
    for m in range(n):
        wf = floor(half_w + rel_pos[m, 0])
        hf = floor(half_h + rel_pos[m, 1])
        if wf < 0 or wf >= W or hf < 0 or hf >= H:
            continue
        occ_count[<Py_ssize_t> wf, <Py_ssize_t> hf] += 1.0
