"""Numpy implementations of the hot loops.

Every function here has a twin with the same signature in ``_kernels.pyx``.
The compiled module is preferred at import time (see ``ftdla.kernels``);
this one is the reference the extension is tested against.
"""

import numpy as np

ACC_MIN = -(1 << 23)
ACC_MAX = (1 << 23) - 1

# netlist node kinds
AND, NAND, HA, FA, NOT, XOR = 0, 1, 2, 3, 4, 5

_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)


def window_truncate(acc, q):
    """Saturate ``acc`` to 24 bits and return the 8-bit window ``[q, q+7]``.

    Rounds toward zero; values that do not fit the window clamp to int8.
    Returns ``(out_int8, n_saturated, n_clipped)``.
    """
    a = np.asarray(acc, dtype=np.int64)
    sat = np.clip(a, ACC_MIN, ACC_MAX)
    n_sat = int(np.count_nonzero(sat != a))
    mag = np.abs(sat) >> q
    out = np.where(sat < 0, -mag, mag)
    clipped = np.clip(out, -128, 127)
    n_clip = int(np.count_nonzero(clipped != out))
    return clipped.astype(np.int8), n_sat, n_clip


def scatter_weight_faults(acc, cols, b_idx, c_idx, k_idx, delta):
    """In place: ``acc[c, b, :] += delta * cols[k, b, :]`` for every fault.

    ``acc`` is channel-major (C, B, M), ``cols`` the (K, B, M) GEMM operand.
    """
    if len(delta) == 0:
        return
    contrib = cols[k_idx, b_idx, :].astype(np.int64) * np.asarray(delta, np.int64)[:, None]
    np.add.at(acc, (c_idx, b_idx), contrib.astype(acc.dtype))


def xor_flips(values, idx, masks):
    """In place XOR of ``masks`` into the flat uint8 buffer ``values``."""
    if len(idx):
        np.bitwise_xor.at(values, idx, masks)


def _maj(x, y, z):
    return (x & y) | (x & z) | (y & z)


def netlist_eval(vals, ntype, nin, nout, nprot, sprot, fnode, frep, fout):
    """Evaluate a levelized netlist bit-parallel over the last axis of ``vals``.

    ``vals`` has shape ``(4, n_signals, words)``: planes 0-2 hold the three
    replicas of signals produced by protected nodes, plane 3 holds the
    public value (plain output of unprotected nodes, the majority vote of
    protected ones, and all primary inputs).  A protected node computes
    three replicas, reading its replica's plane for protected inputs and
    plane 3 otherwise.  ``fnode/frep/fout`` select one output to invert
    (``fnode < 0`` disables the fault).
    """
    for i in range(len(ntype)):
        t = ntype[i]
        prot = nprot[i]
        reps = 3 if prot else 1
        for r in range(reps):
            planes = []
            for j in range(3):
                s = nin[i, j]
                if s < 0:
                    planes.append(None)
                elif prot and sprot[s]:
                    planes.append(vals[r, s])
                else:
                    planes.append(vals[3, s])
            a, b, c = planes
            if t == AND:
                o0, o1 = a & b, None
            elif t == NAND:
                o0, o1 = ~(a & b), None
            elif t == HA:
                o0, o1 = a ^ b, a & b
            elif t == FA:
                x = a ^ b
                o0, o1 = x ^ c, (a & b) | (c & x)
            elif t == NOT:
                o0, o1 = ~a, None
            elif t == XOR:
                o0, o1 = a ^ b, None
            else:
                raise ValueError(f"unknown node kind {t}")
            if i == fnode and r == frep:
                if fout == 0:
                    o0 = o0 ^ _ONES
                elif o1 is not None:
                    o1 = o1 ^ _ONES
            dst = r if prot else 3
            vals[dst, nout[i, 0]] = o0
            if o1 is not None and nout[i, 1] >= 0:
                vals[dst, nout[i, 1]] = o1
        if prot:
            for j in range(2):
                s = nout[i, j]
                if s >= 0:
                    vals[3, s] = _maj(vals[0, s], vals[1, s], vals[2, s])
