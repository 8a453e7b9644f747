"""Numpy reference implementation of the temporal convolution kernels.

Shapes follow the convention used throughout the package:

    x  : (N, T, C_in)   batch of snippet sequences
    w  : (K, C_in, C_out) with K odd; zero padding (K - 1) // 2 keeps length T
    b  : (C_out,)
    y  : (N, T, C_out)

The backward kernel returns gradients with respect to the input, the weights
and the bias given the upstream gradient on y.
"""

import numpy as np


def conv1d_forward(x, w, b):
    k = w.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)  # (N, T, C_in, K)
    return np.einsum("ntik,kio->nto", win, w, optimize=True) + b


def conv1d_backward(x, w, gy):
    k = w.shape[0]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (pad, pad), (0, 0))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
    gw = np.einsum("ntik,nto->kio", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 1))
    # Gradient w.r.t. the input is a correlation of the padded upstream
    # gradient with the time-flipped kernel (transposed in the channel axes).
    q = k - 1 - pad
    gyp = np.pad(gy, ((0, 0), (q, q), (0, 0))) if q else gy
    gwin = np.lib.stride_tricks.sliding_window_view(gyp, k, axis=1)  # (N, T, C_out, K)
    gx = np.einsum("ntok,kio->nti", gwin, w[::-1], optimize=True)
    return gx, gw, gb
