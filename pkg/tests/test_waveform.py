import numpy as np
import pytest

from corrsounder.errors import ConfigError
from corrsounder.pn import generate_msequence, preset
from corrsounder.waveform import (
    SampledWaveform,
    lowpass,
    read_waveform,
    shift_trigger,
    upsample_chips,
    write_waveform,
)


@pytest.fixture(scope="module")
def seq3():
    return generate_msequence(preset(3))


@pytest.fixture(scope="module")
def seq11():
    return generate_msequence(preset(11))


class TestUpsample:
    def test_small_zero_order_hold(self, seq3):
        w = upsample_chips(seq3, 1e6, 2, periods=1)
        assert len(w) == 14
        assert w.sample_rate == 2e6
        expected = np.repeat(seq3.chips, 2)
        assert np.array_equal(w.samples.real, expected)
        assert np.all(w.samples.imag == 0)

    def test_dac_rates(self, seq11):
        w = upsample_chips(seq11, 500e6, 4)
        assert w.sample_rate == 2e9
        assert w.period_samples == 8188
        assert w.trigger_index == 0

    def test_periods_tile(self, seq3):
        one = upsample_chips(seq3, 1e6, 4, periods=1)
        three = upsample_chips(seq3, 1e6, 4, periods=3)
        assert np.array_equal(three.samples, np.tile(one.samples, 3))
        assert three.period_samples == one.period_samples

    def test_energy_per_period(self, seq11):
        w = upsample_chips(seq11, 500e6, 4, periods=2)
        per_period = np.abs(w.samples[: w.period_samples]) ** 2
        assert per_period.sum() == pytest.approx(2047 * 4)

    def test_aliasing_guard(self, seq3):
        with pytest.raises(ConfigError, match="aliasing"):
            upsample_chips(seq3, 1e6, 1)

    def test_periods_guard(self, seq3):
        with pytest.raises(ConfigError):
            upsample_chips(seq3, 1e6, 2, periods=0)


class TestShiftTrigger:
    def test_8ns_step_at_2gsps(self, seq11):
        w = upsample_chips(seq11, 500e6, 4)
        shifted = shift_trigger(w, 1, 8e-9)
        assert shifted.trigger_index == 16
        assert np.array_equal(shifted.samples, w.samples)

    def test_zero_is_identity(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)
        assert shift_trigger(w, 0, 8e-9).trigger_index == w.trigger_index

    def test_full_period_wraps(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)
        period_s = w.period_samples / w.sample_rate
        assert shift_trigger(w, 1, period_s).trigger_index == w.trigger_index

    def test_composes_additively(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)
        a = shift_trigger(shift_trigger(w, 3, 1e-6), 4, 1e-6)
        b = shift_trigger(w, 7, 1e-6)
        assert a.trigger_index == b.trigger_index

    def test_non_integer_shift_rejected(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)  # 4 MS/s
        with pytest.raises(ConfigError, match="whole samples"):
            shift_trigger(w, 1, 1e-7)  # 0.4 samples


class TestLowpass:
    def test_dc_preserved(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)
        dc = SampledWaveform(
            samples=np.ones(len(w), dtype=complex),
            sample_rate=w.sample_rate,
            chip_rate=w.chip_rate,
        )
        out = lowpass(dc, 600e3)
        mid = out.samples[len(out) // 4 : -len(out) // 4]
        level_db = 20 * np.log10(np.abs(mid).mean())
        assert abs(level_db) < 0.5

    def test_tone_at_twice_cutoff_attenuated(self):
        fs = 8e6
        cutoff = 1e6
        t = np.arange(65536) / fs
        tone = SampledWaveform(
            samples=np.exp(2j * np.pi * 2 * cutoff * t), sample_rate=fs, chip_rate=1e6
        )
        out = lowpass(tone, cutoff)
        mid = out.samples[2048:-2048]
        assert 20 * np.log10(np.abs(mid).max() + 1e-300) <= -40.0

    def test_linearity(self, seq3):
        rng = np.random.default_rng(0)
        fs, n = 8e6, 4096
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        y = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        mk = lambda s: SampledWaveform(samples=s, sample_rate=fs, chip_rate=1e6)
        a, b = 0.7 - 0.2j, -1.3 + 0.5j
        combined = lowpass(mk(a * x + b * y), 1e6).samples
        separate = a * lowpass(mk(x), 1e6).samples + b * lowpass(mk(y), 1e6).samples
        assert np.abs(combined - separate).max() <= 1e-9 * np.abs(separate).max()

    def test_correlation_peak_broadening_below_one_chip(self, seq11):
        # 500 Mcps chips through a 600 MHz cutoff: the -3 dB width of the
        # correlation peak grows by less than one chip (8 samples at 2 GS/s)
        w = upsample_chips(seq11, 500e6, 4)
        filtered = lowpass(w, 600e6)

        def half_width(samples):
            corr = np.fft.ifft(
                np.fft.fft(samples) * np.conj(np.fft.fft(w.samples))
            )
            mag = np.abs(np.fft.fftshift(corr))
            peak = mag.max()
            above = np.nonzero(mag >= peak / np.sqrt(2))[0]
            return above.max() - above.min() + 1

        extra_samples = half_width(filtered.samples) - half_width(w.samples)
        assert extra_samples < w.samples_per_chip

    def test_cutoff_range(self, seq3):
        w = upsample_chips(seq3, 1e6, 4)
        with pytest.raises(ConfigError):
            lowpass(w, 0.0)
        with pytest.raises(ConfigError):
            lowpass(w, w.sample_rate / 2)

    def test_trigger_alignment_preserved(self, seq11):
        w = upsample_chips(seq11, 500e6, 4)
        filtered = lowpass(w, 600e6)
        corr = np.fft.ifft(np.fft.fft(filtered.samples) * np.conj(np.fft.fft(w.samples)))
        assert np.argmax(np.abs(corr)) == 0  # no residual group delay


class TestBinaryExport:
    def test_round_trip(self, tmp_path, seq3):
        w = shift_trigger(upsample_chips(seq3, 1e6, 4, periods=2), 2, 1e-6)
        path = tmp_path / "wave.bin"
        write_waveform(w, path)
        back = read_waveform(path)
        assert np.array_equal(back.samples, w.samples)
        assert back.sample_rate == w.sample_rate
        assert back.chip_rate == w.chip_rate
        assert back.trigger_index == w.trigger_index
        assert back.period_samples == w.period_samples
