"""Synthetic baseband waveforms: Gray-mapped constellations, rectangular
pulses, transmitter hardware impairments, hard demodulation and BER."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dsp import as_iq


def _gray_pam(bits_per_axis: int) -> np.ndarray:
    # Level for each Gray label; label 0 sits on the most positive level.
    n = 1 << bits_per_axis
    levels = np.empty(n)
    for idx in range(n):
        label = idx ^ (idx >> 1)
        levels[label] = (n - 1) - 2 * idx
    return levels


def _square_qam(bits: int) -> np.ndarray:
    half = bits // 2
    pam = _gray_pam(half)
    mask = (1 << half) - 1
    pts = np.array([pam[label >> half] + 1j * pam[label & mask] for label in range(1 << bits)])
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


class ModScheme(enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    QAM16 = "QAM16"
    QAM64 = "QAM64"

    @property
    def bits_per_symbol(self) -> int:
        return {"BPSK": 1, "QPSK": 2, "QAM16": 4, "QAM64": 6}[self.value]

    @property
    def constellation(self) -> np.ndarray:
        """Points indexed by their Gray label (MSB-first bits), unit average power."""
        return _CONSTELLATIONS[self]

    @classmethod
    def parse(cls, name) -> "ModScheme":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "")
        return cls(key)


_CONSTELLATIONS = {
    ModScheme.BPSK: _gray_pam(1).astype(np.complex128),
    ModScheme.QPSK: _square_qam(2),
    ModScheme.QAM16: _square_qam(4),
    ModScheme.QAM64: _square_qam(6),
}
for _pts in _CONSTELLATIONS.values():
    _pts.setflags(write=False)


@dataclass(frozen=True)
class DeviceImpairment:
    """Transmitter front-end signature used for fingerprinting scenarios."""

    iq_gain_imbalance: float = 1.0
    iq_phase_skew: float = 0.0
    dc_offset: complex = 0j
    phase_noise_std: float = 0.0

    def __post_init__(self):
        if not 0.8 <= self.iq_gain_imbalance <= 1.2:
            raise ValueError("iq_gain_imbalance must lie in [0.8, 1.2]")
        if abs(self.dc_offset) > 0.1:
            raise ValueError("|dc_offset| must not exceed 0.1")
        if self.phase_noise_std < 0:
            raise ValueError("phase_noise_std must be nonnegative")


def _symbol_labels(bits: np.ndarray, k: int) -> np.ndarray:
    weights = 1 << np.arange(k - 1, -1, -1)
    return bits.reshape(-1, k) @ weights


def modulate(bits, scheme, sps: int = 1) -> np.ndarray:
    """Map bits to symbols and hold each symbol for ``sps`` samples."""
    scheme = ModScheme.parse(scheme)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = scheme.bits_per_symbol
    if sps < 1:
        raise ValueError("sps must be >= 1")
    if bits.size == 0 or bits.size % k:
        raise ValueError(f"{scheme.value} needs a nonzero multiple of {k} bits, got {bits.size}")
    if np.any((bits != 0) & (bits != 1)):
        raise ValueError("bits must be 0 or 1")
    symbols = scheme.constellation[_symbol_labels(bits, k)]
    return np.repeat(symbols, sps)


def random_waveforms(rng: np.random.Generator, scheme, count: int, length: int, sps: int) -> np.ndarray:
    """``count`` independent waveforms of ``length`` samples (must be a multiple of ``sps``)."""
    scheme = ModScheme.parse(scheme)
    if length % sps:
        raise ValueError("length must be a multiple of sps")
    n_sym = length // sps
    labels = rng.integers(0, 1 << scheme.bits_per_symbol, size=(count, n_sym))
    return np.repeat(scheme.constellation[labels], sps, axis=1)


def apply_impairment(x, imp: DeviceImpairment, rng_seed: int = 0) -> np.ndarray:
    """IQ gain/phase imbalance, random-walk phase noise and DC offset.

    Works row-wise on a batch; each row gets its own phase-noise path.
    """
    arr = as_iq(x, allow_batch=True)
    i, q = arr.real, arr.imag
    skewed_q = q * np.cos(imp.iq_phase_skew) + i * np.sin(imp.iq_phase_skew)
    y = imp.iq_gain_imbalance * i + 1j * skewed_q
    if imp.phase_noise_std > 0:
        rng = np.random.default_rng(rng_seed)
        phi = np.cumsum(rng.normal(0.0, imp.phase_noise_std, size=arr.shape), axis=-1)
        y = y * np.exp(1j * phi)
    return y + imp.dc_offset


def demodulate_hard(y, scheme, sps: int = 1) -> np.ndarray:
    """Nearest-point decisions on per-symbol sample means.

    Ties go to the lowest-labelled constellation point.
    """
    scheme = ModScheme.parse(scheme)
    arr = as_iq(y)
    if sps < 1 or arr.size % sps:
        raise ValueError(f"length {arr.size} is not a multiple of sps={sps}")
    symbols = arr.reshape(-1, sps).mean(axis=1)
    pts = scheme.constellation
    labels = np.argmin(np.abs(symbols[:, None] - pts[None, :]), axis=1)
    k = scheme.bits_per_symbol
    shifts = np.arange(k - 1, -1, -1)
    return ((labels[:, None] >> shifts) & 1).astype(np.int8).ravel()


def measure_ber(tx_bits, rx_bits) -> float:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.size != rx.size:
        raise ValueError(f"length mismatch: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise ValueError("cannot measure BER of empty sequences")
    return float(np.count_nonzero(tx != rx)) / tx.size
