"""Stochastic channels: drifting multipath fading, AWGN at a target SNR and
a bursty Gaussian jammer.

All randomness is drawn from ``(rng_seed, step)`` so a channel stream can be
replayed exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .dsp import as_iq

_NOISE_STREAM = 1
_DRIFT_STREAM = 2


def _normalized(taps) -> np.ndarray:
    g = np.array(taps, dtype=np.complex128).ravel()
    if g.size < 1:
        raise ValueError("a channel needs at least one path")
    if not np.all(np.isfinite(g)):
        raise ValueError("path gains must be finite")
    power = np.sum(np.abs(g) ** 2)
    if power <= 0:
        raise ValueError("path gains must not all be zero")
    if abs(power - 1.0) <= 1e-12:
        # Already normalized; dividing again would only perturb the last bits.
        return g
    return g / np.sqrt(power)


@dataclass(frozen=True)
class ChannelModel:
    """One realization of the propagation channel.

    ``snr_db=None`` disables thermal noise and ``jammer_power_db=None``
    disables the jammer. Jammer power is the waveform-average interference
    power relative to the received signal power; it is concentrated on a
    contiguous burst covering ``jammer_duty`` of each waveform.
    """

    snr_db: float | None = None
    fading_taps: np.ndarray = field(default_factory=lambda: np.ones(1, dtype=np.complex128))
    fading_drift_std: float = 0.0
    jammer_power_db: float | None = None
    rng_seed: int = 0
    step: int = 0
    jammer_duty: float = 0.5

    def __post_init__(self):
        g = _normalized(self.fading_taps)
        g.setflags(write=False)
        object.__setattr__(self, "fading_taps", g)
        if self.fading_drift_std < 0:
            raise ValueError("fading_drift_std must be nonnegative")
        if not 0 < self.jammer_duty <= 1:
            raise ValueError("jammer_duty must lie in (0, 1]")


def channel_apply(x, ch: ChannelModel) -> np.ndarray:
    """``y = conv(x, g) + jammer + awgn`` for a buffer or a batch of buffers.

    Noise and jammer powers are set per waveform from the measured power of
    the faded signal.
    """
    arr = as_iq(x, allow_batch=True)
    batch = np.ascontiguousarray(np.atleast_2d(arr))
    faded = np.asarray(kernels.fir_batch(batch, np.ascontiguousarray(ch.fading_taps)))
    if ch.snr_db is None and ch.jammer_power_db is None:
        return faded.reshape(arr.shape)

    rng = np.random.default_rng([ch.rng_seed, ch.step, _NOISE_STREAM])
    rows, n = faded.shape
    p_sig = np.mean(np.abs(faded) ** 2, axis=1, keepdims=True)
    out = faded.copy()
    if ch.jammer_power_db is not None:
        burst = max(1, int(round(ch.jammer_duty * n)))
        starts = rng.integers(0, n - burst + 1, size=rows)
        p_jam = p_sig * 10.0 ** (ch.jammer_power_db / 10.0) * n / burst
        jam = _complex_gaussian(rng, (rows, burst)) * np.sqrt(p_jam)
        cols = starts[:, None] + np.arange(burst)[None, :]
        np.add.at(out, (np.arange(rows)[:, None], cols), jam)
    if ch.snr_db is not None:
        p_noise = p_sig / 10.0 ** (ch.snr_db / 10.0)
        out += _complex_gaussian(rng, (rows, n)) * np.sqrt(p_noise)
    return out.reshape(arr.shape)


def _complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    # Unit average power.
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def channel_step(ch: ChannelModel) -> ChannelModel:
    """Advance one coherence step: Gaussian drift of every path gain, renormalized."""
    taps = ch.fading_taps
    if ch.fading_drift_std > 0:
        rng = np.random.default_rng([ch.rng_seed, ch.step, _DRIFT_STREAM])
        taps = taps + ch.fading_drift_std * _complex_gaussian(rng, taps.shape)
    return replace(ch, fading_taps=taps, step=ch.step + 1)


def empirical_snr_db(clean, received) -> float:
    clean = np.asarray(clean)
    noise = np.asarray(received) - clean
    return float(10 * np.log10(np.mean(np.abs(clean) ** 2) / np.mean(np.abs(noise) ** 2)))


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FadingProfile:
    """Distribution of path gains at channel creation.

    The main path has unit magnitude and a residual carrier phase drawn
    uniformly from ``[-max_phase, max_phase]`` (radians); echoes are complex
    Gaussian with the given average powers relative to the main path.
    ``phase_sign`` pins the residual phase to one side (``+1``/``-1``).
    """

    echo_powers: tuple[float, ...] = ()
    max_phase: float = 0.0
    min_phase: float = 0.0
    phase_sign: int = 0
    drift_std: float = 0.0

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        mag = rng.uniform(self.min_phase, self.max_phase)
        sign = self.phase_sign if self.phase_sign else rng.choice((-1.0, 1.0))
        main = np.exp(1j * sign * mag)
        echoes = _complex_gaussian(rng, len(self.echo_powers)) * np.sqrt(np.asarray(self.echo_powers))
        return np.concatenate([[main], echoes])


@dataclass(frozen=True)
class ChannelPreset:
    name: str
    snr_range: tuple[float, float] | None
    fading: FadingProfile = FadingProfile()
    jammer_power_db: float | None = None

    def sample(self, seed: int, *, jammer_power_db: float | None = None, snr_db: float | None = None) -> ChannelModel:
        """Draw one channel realization; ``seed`` also seeds its noise stream.

        ``snr_db`` pins the SNR instead of drawing it from ``snr_range``.
        """
        rng = np.random.default_rng([seed, 0xC4A7])
        snr = None if self.snr_range is None else float(rng.uniform(*self.snr_range))
        if snr_db is not None:
            snr = float(snr_db)
        jam = self.jammer_power_db if jammer_power_db is None else jammer_power_db
        return ChannelModel(
            snr_db=snr,
            fading_taps=self.fading.sample(rng),
            fading_drift_std=self.fading.drift_std,
            jammer_power_db=jam,
            rng_seed=int(seed),
        )


# Deployed receivers keep a residual carrier-phase error that the controlled
# training setup did not have, plus weak echoes and slow drift.
DEPLOYED_FADING = FadingProfile(echo_powers=(0.004, 0.002), min_phase=0.3, max_phase=0.5, phase_sign=+1, drift_std=0.01)
MIRRORED_FADING = replace(DEPLOYED_FADING, phase_sign=-1)

PRESETS: dict[str, ChannelPreset] = {
    "clean": ChannelPreset("clean", None),
    "high_snr_train": ChannelPreset("high_snr_train", (16.0, 30.0)),
    "mid_snr": ChannelPreset("mid_snr", (6.0, 14.0), DEPLOYED_FADING),
    "low_mid_snr": ChannelPreset("low_mid_snr", (-10.0, 14.0), DEPLOYED_FADING),
    "low_snr": ChannelPreset("low_snr", (-10.0, 4.0), DEPLOYED_FADING),
    "adv": ChannelPreset("adv", (6.0, 14.0), DEPLOYED_FADING, jammer_power_db=0.0),
    "switch_a": ChannelPreset("switch_a", (6.0, 14.0), DEPLOYED_FADING),
    "switch_b": ChannelPreset("switch_b", (6.0, 14.0), MIRRORED_FADING),
}


def get_preset(name: str) -> ChannelPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown channel preset {name!r}; known: {sorted(PRESETS)}") from None
