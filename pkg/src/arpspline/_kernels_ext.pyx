# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport isnan

cnp.import_array()


cdef Py_ssize_t _find_left(const double[::1] knots, double xv,
                           Py_ssize_t degree, Py_ssize_t nbasis) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = knots.shape[0], mid
    # searchsorted(side="right") - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if knots[mid] <= xv:
            lo = mid + 1
        else:
            hi = mid
    lo -= 1
    if lo < degree:
        lo = degree
    if lo > nbasis - 1:
        lo = nbasis - 1
    return lo


def bspline_values(x, knots, Py_ssize_t degree):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] t = np.ascontiguousarray(knots, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0]
    cdef Py_ssize_t nbasis = t.shape[0] - degree - 1
    out_arr = np.zeros((n, nbasis))
    cdef double[:, ::1] out = out_arr
    vals_arr = np.zeros(degree + 1)
    left_arr = np.zeros(degree + 1)
    right_arr = np.zeros(degree + 1)
    cdef double[::1] vals = vals_arr
    cdef double[::1] left = left_arr
    cdef double[::1] right = right_arr
    cdef Py_ssize_t i, j, r, li
    cdef double xi, saved, temp
    with nogil:
        for i in range(n):
            xi = xv[i]
            li = _find_left(t, xi, degree, nbasis)
            vals[0] = 1.0
            for j in range(1, degree + 1):
                left[j] = xi - t[li + 1 - j]
                right[j] = t[li + j] - xi
                saved = 0.0
                for r in range(j):
                    temp = vals[r] / (right[r + 1] + left[j - r])
                    vals[r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vals[j] = saved
            for r in range(degree + 1):
                out[i, li - degree + r] = vals[r]
    return out_arr


def ar_fill(e, phi, lags, u):
    cdef double[:, ::1] ev = e
    cdef const double[:, ::1] ph = np.ascontiguousarray(phi, dtype=np.float64)
    cdef const Py_ssize_t[::1] lg = np.ascontiguousarray(lags, dtype=np.intp)
    cdef const double[:, ::1] uv = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t ntraj = ev.shape[0], ncol = ev.shape[1], p = lg.shape[0]
    cdef Py_ssize_t t, i, j
    cdef double acc
    with nogil:
        for t in range(ntraj):
            for i in range(ncol):
                if isnan(ev[t, i]):
                    # same summation order as the numpy version
                    acc = uv[t, i]
                    for j in range(p):
                        acc = acc + ph[t, j] * ev[t, i - lg[j]]
                    ev[t, i] = acc
    return e
