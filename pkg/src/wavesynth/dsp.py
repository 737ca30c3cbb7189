"""Complex FIR filtering, tap constraints and receiver-side FIR compensation.

Signals are plain 1-D ``complex128`` numpy arrays; batches are 2-D arrays with
one waveform per row. Filtering is causal and length preserving: samples
before the start of the buffer are taken as zero and the convolution tail is
dropped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

COMPENSATION_EPS = 1e-6

_IQ_MAGIC = b"CHIQ"
_IQ_VERSION = 1


class SingularFilterError(ValueError):
    """The synthesis filter has a (near) spectral null and cannot be inverted."""


def as_iq(x, *, allow_batch: bool = False) -> np.ndarray:
    """Validate and convert ``x`` to a complex128 buffer."""
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim not in ((1, 2) if allow_batch else (1,)):
        raise ValueError(f"expected a 1-D IQ buffer, got shape {arr.shape}")
    if arr.shape[-1] == 0:
        raise ValueError("IQ buffer must be nonempty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("IQ buffer contains NaN or Inf")
    return arr


def ideal_taps(num_taps: int) -> np.ndarray:
    """The distortion-free filter ``[1, 0, ..., 0]``."""
    if num_taps < 1:
        raise ValueError("num_taps must be >= 1")
    h = np.zeros(num_taps, dtype=np.complex128)
    h[0] = 1.0
    return h


@dataclass(frozen=True)
class FirFilter:
    """M complex taps constrained to a box of half-width ``alpha`` around ``[1,0,...,0]``."""

    taps: np.ndarray
    alpha: float = 0.1
    reference: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.complex128).ravel()
        if taps.size < 1:
            raise ValueError("a FIR filter needs at least one tap")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        taps.setflags(write=False)
        object.__setattr__(self, "taps", taps)
        ref = ideal_taps(taps.size)
        ref.setflags(write=False)
        object.__setattr__(self, "reference", ref)

    @property
    def num_taps(self) -> int:
        return self.taps.size

    def is_feasible(self, tol: float = 1e-12) -> bool:
        dev = self.taps - self.reference
        return bool(
            np.all(np.abs(dev.real) <= self.alpha + tol)
            and np.all(np.abs(dev.imag) <= self.alpha + tol)
        )

    @classmethod
    def identity(cls, num_taps: int = 11, alpha: float = 0.1) -> "FirFilter":
        return cls(ideal_taps(num_taps), alpha)


def _taps_of(h) -> np.ndarray:
    if isinstance(h, FirFilter):
        return h.taps
    taps = np.asarray(h, dtype=np.complex128).ravel()
    if taps.size < 1:
        raise ValueError("a FIR filter needs at least one tap")
    return taps


def fir_apply(x, h) -> np.ndarray:
    """Direct-form filtering ``y[n] = sum_m h[m] x[n-m]``, truncated to ``len(x)``.

    Accepts a single buffer or a 2-D batch (filters each row).
    """
    arr = as_iq(x, allow_batch=True)
    taps = _taps_of(h)
    batch = np.ascontiguousarray(np.atleast_2d(arr))
    y = kernels.fir_batch(batch, np.ascontiguousarray(taps))
    return np.asarray(y).reshape(arr.shape)


def _fft_size(n: int) -> int:
    return 1 << max(0, int(np.ceil(np.log2(n))))


def fir_apply_fft(x, h) -> np.ndarray:
    """Same result as :func:`fir_apply`, computed through zero-padded FFTs."""
    arr = as_iq(x, allow_batch=True)
    taps = _taps_of(h)
    n = arr.shape[-1]
    nfft = _fft_size(n + taps.size - 1)
    spec = np.fft.fft(arr, nfft, axis=-1) * np.fft.fft(taps, nfft)
    return np.fft.ifft(spec, axis=-1)[..., :n]


def fir_compensate(y, h, eps: float = COMPENSATION_EPS) -> np.ndarray:
    """Undo a causal FIR at the receiver: ``X(f) = Y(f) / H(f)``.

    Invertibility is checked on the length-N frequency grid. Because
    :func:`fir_apply` truncates the convolution, the inverse itself is the
    exact causal deconvolution (forward substitution), which coincides with
    spectral division for the untruncated signal.
    """
    arr = as_iq(y, allow_batch=True)
    taps = _taps_of(h)
    n = arr.shape[-1]
    response = np.fft.fft(taps, max(n, taps.size))
    if np.min(np.abs(response)) < eps:
        raise SingularFilterError(
            f"filter response drops to {np.min(np.abs(response)):.3g} (< {eps:g})"
        )
    return _causal_inverse(arr, taps)


def _causal_inverse(y: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # Forward substitution on the lower-triangular Toeplitz system.
    if abs(taps[0]) < COMPENSATION_EPS:
        raise SingularFilterError("leading tap is zero; causal inverse does not exist")
    batch = np.atleast_2d(y)
    n = batch.shape[1]
    x = np.zeros_like(batch, dtype=np.complex128)
    tail = taps[1:]
    for k in range(n):
        upto = min(k, tail.size)
        acc = batch[:, k].copy()
        if upto:
            acc -= x[:, k - upto : k][:, ::-1] @ tail[:upto]
        x[:, k] = acc / taps[0]
    return x.reshape(y.shape)


def clamp_taps(raw, alpha: float = 0.1, num_taps: int | None = None) -> FirFilter:
    """Map an action vector in ``[-1, 1]^(2M)`` to feasible taps.

    ``h[m] = h0[m] + alpha * (raw[2m] + 1j * raw[2m+1])``; raw values outside
    ``[-1, 1]`` are clipped so the box constraint always holds.
    """
    raw = np.asarray(raw, dtype=np.float64).ravel()
    if raw.size == 0 or raw.size % 2:
        raise ValueError(f"action must hold 2*M reals, got {raw.size}")
    if num_taps is not None and raw.size != 2 * num_taps:
        raise ValueError(f"expected {2 * num_taps} action values for M={num_taps}, got {raw.size}")
    if not np.all(np.isfinite(raw)):
        raise ValueError("action contains NaN or Inf")
    raw = np.clip(raw, -1.0, 1.0)
    offsets = raw[0::2] + 1j * raw[1::2]
    return FirFilter(ideal_taps(raw.size // 2) + alpha * offsets, alpha)


def write_iq(path, x) -> None:
    """Write a buffer as ``CHIQ`` v1: magic, u32 version, u64 count, f64 I/Q pairs (LE)."""
    arr = as_iq(x)
    inter = np.empty(2 * arr.size, dtype="<f8")
    inter[0::2] = arr.real
    inter[1::2] = arr.imag
    with open(path, "wb") as fh:
        fh.write(_IQ_MAGIC + struct.pack("<IQ", _IQ_VERSION, arr.size))
        fh.write(inter.tobytes())


def read_iq(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _IQ_MAGIC:
        raise ValueError(f"{path}: not a CHIQ file")
    version, count = struct.unpack_from("<IQ", data, 4)
    if version != _IQ_VERSION:
        raise ValueError(f"{path}: unsupported CHIQ version {version}")
    body = np.frombuffer(data, dtype="<f8", offset=16)
    if body.size != 2 * count:
        raise ValueError(f"{path}: expected {count} samples, found {body.size // 2}")
    return body[0::2] + 1j * body[1::2]
