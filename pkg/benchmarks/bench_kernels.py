"""Time the compiled FIR kernel against the numpy fallback.

Run with ``python benchmarks/bench_kernels.py``. Shapes match one agent step:
a batch of 32 waveforms of 128 samples through 11 taps, plus a larger batch.
"""

import argparse
import timeit

import numpy as np

from wavesynth import _fallback, kernels

try:
    from wavesynth import _kernels
except ImportError:
    _kernels = None


def bench(fn, x, h, number):
    fn(x, h)
    return min(timeit.repeat(lambda: fn(x, h), number=number, repeat=5)) / number


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--number", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    h = rng.normal(size=11) + 1j * rng.normal(size=11)
    print(f"active backend: {kernels.BACKEND}")
    for batch, n in [(32, 128), (256, 1024)]:
        x = rng.normal(size=(batch, n)) + 1j * rng.normal(size=(batch, n))
        t_py = bench(_fallback.fir_batch, x, h, args.number)
        line = f"batch={batch:4d} n={n:5d}  numpy {t_py * 1e6:9.1f} us"
        if _kernels is not None:
            t_cy = bench(_kernels.fir_batch, x, h, args.number)
            err = np.max(np.abs(_kernels.fir_batch(x, h) - _fallback.fir_batch(x, h)))
            line += f"  cython {t_cy * 1e6:9.1f} us  speedup {t_py / t_cy:5.2f}x  max|diff| {err:.1e}"
        else:
            line += "  cython (not built)"
        print(line)


if __name__ == "__main__":
    main()
