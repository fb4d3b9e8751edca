# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the loops in ``_kernels_py``.  Same signatures, same results."""

import numpy as np
cimport cython
from libc.stdint cimport int8_t, int32_t, int64_t, uint8_t, uint64_t

ctypedef fused colfloat:
    float
    double

cdef int64_t ACC_MIN = -(1 << 23)
cdef int64_t ACC_MAX = (1 << 23) - 1


ctypedef fused accint:
    int32_t
    int64_t


def _truncate(accint[::1] a, int8_t[::1] o, int q):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef int64_t v, m
    cdef long n_sat = 0, n_clip = 0
    for i in range(n):
        v = a[i]
        if v > ACC_MAX:
            v = ACC_MAX
            n_sat += 1
        elif v < ACC_MIN:
            v = ACC_MIN
            n_sat += 1
        if v < 0:
            m = -((-v) >> q)
        else:
            m = v >> q
        if m > 127:
            m = 127
            n_clip += 1
        elif m < -128:
            m = -128
            n_clip += 1
        o[i] = <int8_t>m
    return n_sat, n_clip


def window_truncate(acc, int q):
    arr = np.asarray(acc)
    if arr.dtype != np.int32 and arr.dtype != np.int64:
        arr = arr.astype(np.int64)
    flat = np.ascontiguousarray(arr).reshape(-1)
    out = np.empty(flat.shape[0], dtype=np.int8)
    n_sat, n_clip = _truncate(flat, out, q)
    return out.reshape(arr.shape), n_sat, n_clip


def scatter_weight_faults(int32_t[:, :, ::1] acc, colfloat[:, :, ::1] cols,
                          int64_t[::1] b_idx, int64_t[::1] c_idx, int64_t[::1] k_idx,
                          delta):
    cdef int32_t[::1] d = np.ascontiguousarray(delta, dtype=np.int32)
    cdef Py_ssize_t f, m, M = acc.shape[2]
    cdef int64_t b, c, k
    cdef int32_t dv
    for f in range(d.shape[0]):
        b = b_idx[f]
        c = c_idx[f]
        k = k_idx[f]
        dv = d[f]
        for m in range(M):
            acc[c, b, m] += dv * <int32_t>cols[k, b, m]


def xor_flips(uint8_t[::1] values, int64_t[::1] idx, uint8_t[::1] masks):
    cdef Py_ssize_t f
    for f in range(idx.shape[0]):
        values[idx[f]] ^= masks[f]


def netlist_eval(uint64_t[:, :, ::1] vals, int8_t[::1] ntype, int32_t[:, ::1] nin,
                 int32_t[:, ::1] nout, uint8_t[::1] nprot, uint8_t[::1] sprot,
                 long fnode, long frep, long fout):
    cdef Py_ssize_t i, w, r, W = vals.shape[2], n = ntype.shape[0]
    cdef int t, reps, dst, prot
    cdef int32_t i0, i1, i2, o0, o1
    cdef int p0, p1, p2
    cdef uint64_t a, b, c, x, s, co, flip0, flip1
    cdef uint64_t ONES = 0xFFFFFFFFFFFFFFFFULL
    for i in range(n):
        t = ntype[i]
        prot = nprot[i]
        reps = 3 if prot else 1
        i0 = nin[i, 0]
        i1 = nin[i, 1]
        i2 = nin[i, 2]
        o0 = nout[i, 0]
        o1 = nout[i, 1]
        for r in range(reps):
            p0 = 3
            p1 = 3
            p2 = 3
            if prot:
                if i0 >= 0 and sprot[i0]:
                    p0 = r
                if i1 >= 0 and sprot[i1]:
                    p1 = r
                if i2 >= 0 and sprot[i2]:
                    p2 = r
            flip0 = 0
            flip1 = 0
            if i == fnode and r == frep:
                if fout == 0:
                    flip0 = ONES
                else:
                    flip1 = ONES
            dst = r if prot else 3
            for w in range(W):
                a = vals[p0, i0, w] if i0 >= 0 else 0
                b = vals[p1, i1, w] if i1 >= 0 else 0
                if t == 0:
                    s = a & b
                elif t == 1:
                    s = ~(a & b)
                elif t == 2:
                    s = a ^ b
                    co = a & b
                elif t == 3:
                    c = vals[p2, i2, w]
                    x = a ^ b
                    s = x ^ c
                    co = (a & b) | (c & x)
                elif t == 4:
                    s = ~a
                else:
                    s = a ^ b
                vals[dst, o0, w] = s ^ flip0
                if (t == 2 or t == 3) and o1 >= 0:
                    vals[dst, o1, w] = co ^ flip1
        if prot:
            for w in range(W):
                vals[3, o0, w] = ((vals[0, o0, w] & vals[1, o0, w]) | (vals[0, o0, w] & vals[2, o0, w])
                                  | (vals[1, o0, w] & vals[2, o0, w]))
                if (t == 2 or t == 3) and o1 >= 0:
                    vals[3, o1, w] = ((vals[0, o1, w] & vals[1, o1, w]) | (vals[0, o1, w] & vals[2, o1, w])
                                      | (vals[1, o1, w] & vals[2, o1, w]))
