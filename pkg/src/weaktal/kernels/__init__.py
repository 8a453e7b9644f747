"""Temporal convolution kernels with an optional compiled fast path.

The hot loops of training are the kernel-3 / kernel-1 temporal convolutions
and their gradients.  A Cython extension implements them when it was built;
otherwise the numpy reference implementation is used.  The backend is chosen
once at import time and can be forced to the reference implementation with
WEAKTAL_PURE_PYTHON=1 (useful for benchmarking, see benchmarks/).

Both backends compute in float64 and agree to floating-point accumulation
order differences (~1e-13 relative); they are interchangeable.
"""

import os

import numpy as np

from . import _reference

_IMPL = _reference
_BACKEND = "reference"

if not os.environ.get("WEAKTAL_PURE_PYTHON"):
    try:
        from . import _convkern

        _IMPL = _convkern
        _BACKEND = "compiled"
    except ImportError:
        pass


def backend():
    """Name of the active kernel backend: 'compiled' or 'reference'."""
    return _BACKEND


def available_backends():
    """Mapping of backend name -> kernel module, for tests and benchmarks."""
    out = {"reference": _reference}
    try:
        from . import _convkern

        out["compiled"] = _convkern
    except ImportError:
        pass
    return out


def _as_input(arr, name, ndim):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must have {ndim} dimensions, got {arr.ndim}")
    return arr


def conv1d_forward(x, w, b, impl=None):
    """Temporal convolution of a batch: (N, T, C_in) -> (N, T, C_out).

    Zero padding of (K - 1) // 2 preserves the sequence length; K must be odd.
    """
    x = _as_input(x, "x", 3)
    w = _as_input(w, "w", 3)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if w.shape[0] % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {w.shape[0]}")
    if x.shape[2] != w.shape[1]:
        raise ValueError(f"input channels {x.shape[2]} != kernel channels {w.shape[1]}")
    if b.shape != (w.shape[2],):
        raise ValueError(f"bias shape {b.shape} does not match {w.shape[2]} output channels")
    return np.asarray((impl or _IMPL).conv1d_forward(x, w, b))


def conv1d_backward(x, w, gy, impl=None):
    """Gradients (gx, gw, gb) of conv1d_forward given upstream gradient gy."""
    x = _as_input(x, "x", 3)
    w = _as_input(w, "w", 3)
    gy = _as_input(gy, "gy", 3)
    if gy.shape != (x.shape[0], x.shape[1], w.shape[2]):
        raise ValueError(f"gy shape {gy.shape} inconsistent with x {x.shape} and w {w.shape}")
    gx, gw, gb = (impl or _IMPL).conv1d_backward(x, w, gy)
    return np.asarray(gx), np.asarray(gw), np.asarray(gb)
