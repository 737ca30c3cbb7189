# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for causal, length-preserving complex FIR filtering."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def fir_batch(const double complex[:, ::1] x, const double complex[::1] h):
    """Filter every row of ``x`` with taps ``h``; output has the shape of ``x``."""
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t n = x.shape[1]
    cdef Py_ssize_t m_taps = h.shape[0]
    cdef Py_ssize_t r, i, m, top
    cdef double complex acc
    out = np.empty((rows, n), dtype=np.complex128)
    cdef double complex[:, ::1] y = out
    for r in range(rows):
        for i in range(n):
            acc = 0
            top = m_taps - 1 if i >= m_taps - 1 else i
            for m in range(top + 1):
                acc = acc + h[m] * x[r, i - m]
            y[r, i] = acc
    return out
