# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled temporal convolution kernels (float64, C-contiguous).

Same contract as the numpy reference module: zero padding of (K - 1) // 2 on
the time axis so the output length equals the input length.
"""

import numpy as np


def conv1d_forward(double[:, :, ::1] x, double[:, :, ::1] w, double[::1] b):
    cdef Py_ssize_t n_seq = x.shape[0]
    cdef Py_ssize_t t_len = x.shape[1]
    cdef Py_ssize_t c_in = x.shape[2]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t c_out = w.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2

    y_arr = np.empty((n_seq, t_len, c_out), dtype=np.float64)
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t n, t, tau, i, o, src
    cdef double xv

    with nogil:
        for n in range(n_seq):
            for t in range(t_len):
                for o in range(c_out):
                    y[n, t, o] = b[o]
                for tau in range(k):
                    src = t + tau - pad
                    if src < 0 or src >= t_len:
                        continue
                    for i in range(c_in):
                        xv = x[n, src, i]
                        for o in range(c_out):
                            y[n, t, o] += xv * w[tau, i, o]
    return y_arr


def conv1d_backward(double[:, :, ::1] x, double[:, :, ::1] w, double[:, :, ::1] gy):
    cdef Py_ssize_t n_seq = x.shape[0]
    cdef Py_ssize_t t_len = x.shape[1]
    cdef Py_ssize_t c_in = x.shape[2]
    cdef Py_ssize_t k = w.shape[0]
    cdef Py_ssize_t c_out = w.shape[2]
    cdef Py_ssize_t pad = (k - 1) // 2

    # Work in (k, c_out, c_in) layout so the innermost loop runs over
    # contiguous rows of x, gx, the weights and the weight gradient.
    wt_arr = np.ascontiguousarray(np.transpose(w, (0, 2, 1)))
    gx_arr = np.zeros((n_seq, t_len, c_in), dtype=np.float64)
    gwt_arr = np.zeros((k, c_out, c_in), dtype=np.float64)
    gb_arr = np.zeros(c_out, dtype=np.float64)
    cdef double[:, :, ::1] wt = wt_arr
    cdef double[:, :, ::1] gx = gx_arr
    cdef double[:, :, ::1] gwt = gwt_arr
    cdef double[::1] gb = gb_arr
    cdef Py_ssize_t n, t, tau, i, o, src
    cdef double g

    with nogil:
        for n in range(n_seq):
            for t in range(t_len):
                for o in range(c_out):
                    gb[o] += gy[n, t, o]
                for tau in range(k):
                    src = t + tau - pad
                    if src < 0 or src >= t_len:
                        continue
                    for o in range(c_out):
                        g = gy[n, t, o]
                        for i in range(c_in):
                            gwt[tau, o, i] += g * x[n, src, i]
                            gx[n, src, i] += g * wt[tau, o, i]
    gw_arr = np.ascontiguousarray(np.transpose(gwt_arr, (0, 2, 1)))
    return gx_arr, gw_arr, gb_arr
