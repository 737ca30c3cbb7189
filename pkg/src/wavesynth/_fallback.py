"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def fir_batch(x, h):
    x = np.ascontiguousarray(x, dtype=np.complex128)
    h = np.ascontiguousarray(h, dtype=np.complex128)
    n = x.shape[1]
    y = np.zeros_like(x)
    for m in range(min(len(h), n)):
        y[:, m:] += h[m] * x[:, : n - m]
    return y
