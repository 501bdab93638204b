# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (MinHash minima, fused GRU
cell).  Semantics mirror morphkit._pykernels exactly; see that module for
the contract docstrings."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, tanh
from libc.stdint cimport uint64_t

cnp.import_array()

IS_COMPILED = True

cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9u
cdef uint64_t MIX2 = 0x94D049BB133111EBu


cdef inline uint64_t _mix64(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * MIX1
    z = (z ^ (z >> 27)) * MIX2
    return z ^ (z >> 31)


cdef inline double _sigmoid(double a) nogil:
    cdef double e
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    e = exp(a)
    return e / (1.0 + e)


def minhash_mins(token_hashes, keys):
    if token_hashes.size == 0:
        raise ValueError("minhash_mins: empty token hash array")
    cdef uint64_t[::1] th = np.ascontiguousarray(token_hashes, dtype=np.uint64)
    cdef uint64_t[::1] kk = np.ascontiguousarray(keys, dtype=np.uint64)
    out_arr = np.empty(kk.shape[0], dtype=np.uint64)
    cdef uint64_t[::1] out = out_arr
    cdef Py_ssize_t n = th.shape[0], p = kk.shape[0]
    cdef Py_ssize_t i, j
    cdef uint64_t k, best, v
    with nogil:
        for j in range(p):
            k = kk[j]
            best = _mix64(th[0] ^ k)
            for i in range(1, n):
                v = _mix64(th[i] ^ k)
                if v < best:
                    best = v
            out[j] = best
    return out_arr


def gru_forward(x, h, wz, wr, wh, bz, br, bh):
    cdef double[::1] xv = x, hv = h, bzv = bz, brv = br, bhv = bh
    cdef double[:, ::1] wzv = wz, wrv = wr, whv = wh
    cdef Py_ssize_t n_in = xv.shape[0], n_h = hv.shape[0]
    h_new = np.empty(n_h)
    z = np.empty(n_h)
    r = np.empty(n_h)
    c = np.empty(n_h)
    cdef double[::1] hn = h_new, zv = z, rv = r, cv = c
    cdef Py_ssize_t i, j
    cdef double az, ar, ac
    with nogil:
        for i in range(n_h):
            az = bzv[i]
            ar = brv[i]
            for j in range(n_in):
                az += wzv[i, j] * xv[j]
                ar += wrv[i, j] * xv[j]
            for j in range(n_h):
                az += wzv[i, n_in + j] * hv[j]
                ar += wrv[i, n_in + j] * hv[j]
            zv[i] = _sigmoid(az)
            rv[i] = _sigmoid(ar)
        for i in range(n_h):
            ac = bhv[i]
            for j in range(n_in):
                ac += whv[i, j] * xv[j]
            for j in range(n_h):
                ac += whv[i, n_in + j] * (rv[j] * hv[j])
            cv[i] = tanh(ac)
            hn[i] = (1.0 - zv[i]) * hv[i] + zv[i] * cv[i]
    return h_new, z, r, c


def gru_backward(g, x, h, z, r, c, wz, wr, wh):
    cdef double[::1] gv = g, xv = x, hv = h, zv = z, rv = r, cv = c
    cdef double[:, ::1] wzv = wz, wrv = wr, whv = wh
    cdef Py_ssize_t n_in = xv.shape[0], n_h = hv.shape[0], tot = n_in + n_h
    dx = np.zeros(n_in)
    dh = np.empty(n_h)
    dwz = np.empty((n_h, tot))
    dwr = np.empty((n_h, tot))
    dwh = np.empty((n_h, tot))
    daz = np.empty(n_h)
    dar = np.empty(n_h)
    dac = np.empty(n_h)
    cdef double[::1] dxv = dx, dhv = dh, dazv = daz, darv = dar, dacv = dac
    cdef double[:, ::1] dwzv = dwz, dwrv = dwr, dwhv = dwh
    cdef Py_ssize_t i, j
    cdef double dz_i, dc_i, v, drh, dr_i
    with nogil:
        for i in range(n_h):
            dz_i = gv[i] * (cv[i] - hv[i])
            dazv[i] = dz_i * zv[i] * (1.0 - zv[i])
            dc_i = gv[i] * zv[i]
            dacv[i] = dc_i * (1.0 - cv[i] * cv[i])
        # dcat_r = wh.T @ dac; its state half feeds r and h
        for i in range(n_h):
            dhv[i] = gv[i] * (1.0 - zv[i])
        for i in range(n_h):
            v = dacv[i]
            for j in range(n_in):
                dxv[j] += whv[i, j] * v
            # accumulate d(r*h) contribution directly into dr / dh below
        for j in range(n_h):
            drh = 0.0
            for i in range(n_h):
                drh += whv[i, n_in + j] * dacv[i]
            dr_i = drh * hv[j]
            darv[j] = dr_i * rv[j] * (1.0 - rv[j])
            dhv[j] += drh * rv[j]
        # dcat = wz.T @ daz + wr.T @ dar
        for i in range(n_h):
            v = dazv[i]
            for j in range(n_in):
                dxv[j] += wzv[i, j] * v
            for j in range(n_h):
                dhv[j] += wzv[i, n_in + j] * v
        for i in range(n_h):
            v = darv[i]
            for j in range(n_in):
                dxv[j] += wrv[i, j] * v
            for j in range(n_h):
                dhv[j] += wrv[i, n_in + j] * v
        # outer products against [x;h] and [x;r*h]
        for i in range(n_h):
            for j in range(n_in):
                dwzv[i, j] = dazv[i] * xv[j]
                dwrv[i, j] = darv[i] * xv[j]
                dwhv[i, j] = dacv[i] * xv[j]
            for j in range(n_h):
                dwzv[i, n_in + j] = dazv[i] * hv[j]
                dwrv[i, n_in + j] = darv[i] * hv[j]
                dwhv[i, n_in + j] = dacv[i] * (rv[j] * hv[j])
    return dx, dh, dwz, dwr, dwh, daz, dar, dac
