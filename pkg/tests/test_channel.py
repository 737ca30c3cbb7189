import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavesynth.channel import (
    PRESETS,
    ChannelModel,
    channel_apply,
    channel_step,
    empirical_snr_db,
    get_preset,
)
from wavesynth.dsp import fir_apply


def tone(n, seed=0):
    rng = np.random.default_rng(seed)
    return np.exp(1j * rng.uniform(0, 2 * np.pi, n))


class TestApply:
    def test_transparent(self):
        x = tone(100)
        np.testing.assert_array_equal(channel_apply(x, ChannelModel()), x)

    @pytest.mark.parametrize("snr_db", [-10.0, 0.0, 7.5, 20.0])
    def test_empirical_snr(self, snr_db):
        x = tone(20_000, 1)
        y = channel_apply(x, ChannelModel(snr_db=snr_db, rng_seed=5))
        assert abs(empirical_snr_db(x, y) - snr_db) < 0.5

    def test_jammer_power_additivity(self):
        x = tone(10_000, 2)
        y = channel_apply(x, ChannelModel(jammer_power_db=0.0, rng_seed=3))
        ratio = np.mean(np.abs(y) ** 2) / np.mean(np.abs(x) ** 2)
        assert abs(ratio - 2.0) < 0.2

    def test_jammer_is_bursty(self):
        x = np.zeros(1000, dtype=complex)
        x[:] = 1.0
        y = channel_apply(x, ChannelModel(jammer_power_db=10.0, rng_seed=4))
        hit = np.abs(y - x) > 0
        assert hit.sum() == 500
        idx = np.flatnonzero(hit)
        assert idx[-1] - idx[0] == 499

    def test_fading_is_a_convolution(self):
        g = np.array([0.8, 0.6j])
        x = tone(64, 3)
        np.testing.assert_allclose(channel_apply(x, ChannelModel(fading_taps=g)), fir_apply(x, g), atol=1e-14)

    def test_snr_is_post_fading(self):
        x = tone(20_000, 4)
        ch = ChannelModel(snr_db=3.0, fading_taps=[0.9, 0.3 + 0.3j], rng_seed=6)
        faded = channel_apply(x, ChannelModel(fading_taps=ch.fading_taps))
        assert abs(empirical_snr_db(faded, channel_apply(x, ch)) - 3.0) < 0.5

    def test_deterministic_given_seed_and_step(self):
        x = tone(256, 5)
        ch = ChannelModel(snr_db=5.0, jammer_power_db=-3.0, rng_seed=11, step=7)
        np.testing.assert_array_equal(channel_apply(x, ch), channel_apply(x, ch))
        other = ChannelModel(snr_db=5.0, jammer_power_db=-3.0, rng_seed=11, step=8)
        assert not np.array_equal(channel_apply(x, ch), channel_apply(x, other))

    def test_batch_equals_rowwise_power_scaling(self):
        xb = np.stack([tone(128, 6), 3 * tone(128, 7)])
        y = channel_apply(xb, ChannelModel(snr_db=0.0, rng_seed=1))
        noise = y - xb
        # Noise follows each row's own power.
        assert np.mean(np.abs(noise[1]) ** 2) > 4 * np.mean(np.abs(noise[0]) ** 2)


class TestModel:
    def test_taps_normalized(self):
        ch = ChannelModel(fading_taps=[3, 4j])
        assert np.sum(np.abs(ch.fading_taps) ** 2) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("taps", [[], [0, 0], [np.nan]])
    def test_bad_taps(self, taps):
        with pytest.raises(ValueError):
            ChannelModel(fading_taps=taps)

    def test_negative_drift(self):
        with pytest.raises(ValueError):
            ChannelModel(fading_drift_std=-0.1)


class TestStep:
    def test_no_drift_identical(self):
        ch = ChannelModel(snr_db=4.0, fading_taps=[1, 0.2], rng_seed=3)
        nxt = channel_step(ch)
        np.testing.assert_array_equal(nxt.fading_taps, ch.fading_taps)
        assert nxt.snr_db == ch.snr_db
        assert nxt.step == ch.step + 1

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.0, 0.5), st.integers(1, 60))
    def test_unit_power_after_steps(self, seed, drift, steps):
        ch = ChannelModel(fading_taps=[1, 0.3, 0.1j], fading_drift_std=drift, rng_seed=seed)
        for _ in range(steps):
            ch = channel_step(ch)
        assert abs(np.sum(np.abs(ch.fading_taps) ** 2) - 1) < 1e-12
        assert np.all(np.isfinite(ch.fading_taps))

    def test_reproducible(self):
        a = b = ChannelModel(fading_taps=[1, 0.3], fading_drift_std=0.05, rng_seed=9)
        for _ in range(10):
            a, b = channel_step(a), channel_step(b)
        np.testing.assert_array_equal(a.fading_taps, b.fading_taps)


class TestPresets:
    def test_named_presets_exist(self):
        for name in ("high_snr_train", "mid_snr", "low_mid_snr", "adv"):
            assert name in PRESETS

    @pytest.mark.parametrize("name,lo,hi", [("high_snr_train", 16, 30), ("mid_snr", 6, 14), ("low_mid_snr", -10, 14)])
    def test_snr_ranges(self, name, lo, hi):
        snrs = [get_preset(name).sample(s).snr_db for s in range(200)]
        assert lo <= min(snrs) and max(snrs) <= hi

    def test_adv_has_jammer(self):
        assert get_preset("adv").sample(0).jammer_power_db is not None
        assert get_preset("adv").sample(0, jammer_power_db=-5.0).jammer_power_db == -5.0

    def test_deployed_fading_has_three_paths(self):
        assert get_preset("mid_snr").sample(1).fading_taps.size == 3

    def test_switch_presets_mirror_each_other(self):
        a = np.angle([get_preset("switch_a").sample(s).fading_taps[0] for s in range(50)])
        b = np.angle([get_preset("switch_b").sample(s).fading_taps[0] for s in range(50)])
        assert np.all(a > 0) and np.all(b < 0)

    def test_pinned_snr(self):
        assert get_preset("mid_snr").sample(3, snr_db=-2.0).snr_db == -2.0

    def test_unknown(self):
        with pytest.raises(ValueError):
            get_preset("nope")

    def test_sampling_is_deterministic(self):
        a, b = get_preset("low_mid_snr").sample(17), get_preset("low_mid_snr").sample(17)
        assert a.snr_db == b.snr_db
        np.testing.assert_array_equal(a.fading_taps, b.fading_taps)
