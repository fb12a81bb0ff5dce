"""Sliding correlation: time-dilated CIR recovery and the timing math.

The receiver regenerates the probing code at a slightly slower chip rate and
mixes it against the incoming waveform.  The code alignment slips by one full
code length per dilated period, so a true excess delay ``tau`` shows up at
compressed time ``tau * slide_factor`` where

    slide_factor = f_tx / (f_tx - f_rx)

``correlate_literal`` implements that mixer sample by sample (the ground
truth; expensive at full rate).  ``correlate_fast`` produces the same trace
cheaply: when the slow code is periodic on the sample grid it composes the
mixer output exactly in the frequency domain from one code period of input,
otherwise it falls back to a folded cyclic correlation shaped by an
equivalent low-pass kernel.

Mixer self-noise: the product of the two code waveforms contains, besides
the slipping correlation (line pairs j, -j of the two code-harmonic combs),
cross pairs (j, i) landing at output frequency gamma*j + (gamma-1)*i in
units of the compressed line spacing.  Cross families with j + i = c sit
(gamma - 1) * c lines away from the correlation band: at the 500 Mcps
configuration (slide factor / code length = 3.9) they fall outside the
correlator low-pass and the trace floor reaches the m-sequence bound, but
at the desk scale (slide factor = code length + 1) they land inside the
band occupied by the correlation itself and no filter can remove them.
The desk preset's noiseless trace therefore floors about 17 dB below the
peak; that self-noise is deterministic mixer physics, reproduced exactly
by ``correlate_fast``, and receiver noise floors are measured with the
transmitter silent (as with the hardware's calibration practice).

Output rate is fixed at 16 compressed samples per chip-equivalent,
i.e. 16 x (f_tx - f_rx) in absolute terms.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft as sfft

from .errors import ConfigError, OperationCancelled, SimulationError
from .pn import ChipSequence, LfsrSpec, generate_msequence, preset
from .waveform import SampledWaveform, design_lowpass_taps, upsample_chips

__all__ = [
    "CorrelatorConfig",
    "DilatedCir",
    "SounderPreset",
    "desk_preset",
    "full_preset",
    "get_preset",
    "COMPRESSED_SAMPLES_PER_CHIP",
    "slide_factor",
    "dilated_period",
    "processing_gain",
    "rx_chip_rate_from_divider",
    "correlate_literal",
    "correlate_fast",
    "write_cir_csv",
]

#: Compressed-domain output rate, in samples per dilated chip duration.
COMPRESSED_SAMPLES_PER_CHIP = 16

_CHUNK = 1 << 22


@dataclass(frozen=True)
class CorrelatorConfig:
    """TX/RX chip rates, code length and the receiver filter cutoffs.

    ``lpf_cutoff`` (0 means the 4 x rate-offset default) shapes the
    compressed output.
    """

    tx_chip_rate: float
    rx_chip_rate: float
    code_length: int
    lpf_cutoff: float = 0.0

    def __post_init__(self) -> None:
        if self.tx_chip_rate <= 0 or self.rx_chip_rate <= 0:
            raise ConfigError("chip rates must be positive")
        if self.rx_chip_rate >= self.tx_chip_rate:
            raise ConfigError(
                f"rx chip rate {self.rx_chip_rate} must be slower than tx {self.tx_chip_rate}"
            )
        if self.code_length < 3:
            raise ConfigError("code length must be >= 3")
        if self.lpf_cutoff == 0.0:
            object.__setattr__(self, "lpf_cutoff", 4.0 * self.rate_offset)
        if self.lpf_cutoff < 2.0 * self.rate_offset:
            raise ConfigError(
                f"lpf_cutoff {self.lpf_cutoff} below twice the chip-rate offset "
                f"{self.rate_offset}"
            )

    @property
    def rate_offset(self) -> float:
        return self.tx_chip_rate - self.rx_chip_rate

    @property
    def compressed_sample_rate(self) -> float:
        return COMPRESSED_SAMPLES_PER_CHIP * self.rate_offset


def slide_factor(cfg: CorrelatorConfig) -> float:
    """Time-dilation factor f_tx / (f_tx - f_rx)."""
    offset = cfg.rate_offset
    if offset <= 0:
        raise ConfigError("chip-rate offset must be positive")
    return cfg.tx_chip_rate / offset


def dilated_period(cfg: CorrelatorConfig) -> float:
    """Duration of one compressed CIR trace: code_length / rate offset."""
    return cfg.code_length / cfg.rate_offset


def processing_gain(gamma: float) -> float:
    """SNR improvement of the sliding correlator, 10*log10(slide factor)."""
    if gamma <= 1:
        raise ConfigError(f"slide factor must exceed 1, got {gamma}")
    return 10.0 * math.log10(gamma)


def rx_chip_rate_from_divider(synth_freq: float, divider: int) -> float:
    """Receive chip rate derived from a synthesizer clock and divider."""
    if divider < 1:
        raise ConfigError("divider must be >= 1")
    return synth_freq / divider


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SounderPreset:
    """Code spec, correlator config and simulation rate bundled together."""

    name: str
    pn_spec: LfsrSpec
    config: CorrelatorConfig
    samples_per_chip: int

    @property
    def sample_rate(self) -> float:
        return self.config.tx_chip_rate * self.samples_per_chip

    def chip_sequence(self) -> ChipSequence:
        return generate_msequence(self.pn_spec)

    def transmit_waveform(self, periods: int | None = None) -> SampledWaveform:
        """Probing waveform; defaults to exactly one dilated period."""
        if periods is None:
            periods = int(round(slide_factor(self.config)))
        return upsample_chips(
            self.chip_sequence(), self.config.tx_chip_rate, self.samples_per_chip, periods
        )


def desk_preset() -> SounderPreset:
    """Order-7/127-chip configuration, slide factor 128, test-speed scale.

    8 samples per chip makes the simulation bandwidth 8 MHz, which equals
    slide_factor x the correlator's noise-equivalent bandwidth (2 x cutoff =
    8 x rate offset), so measured processing gain lands on
    10*log10(slide factor) when input SNR is referenced to the simulation
    bandwidth.  With slide factor = code length + 1 the mixer self-noise
    floors the noiseless trace near -17 dB (see module doc).
    """
    tx = 1e6
    return SounderPreset(
        name="desk",
        pn_spec=preset(7),
        config=CorrelatorConfig(
            tx_chip_rate=tx, rx_chip_rate=tx * 127 / 128, code_length=127
        ),
        samples_per_chip=8,
    )


def full_preset() -> SounderPreset:
    """Order-11/2047-chip configuration at 500 Mcps, slide factor 8000.

    One dilated period is 32.752 ms, i.e. 65.5 M samples at 2 GS/s, so
    full-rate literal runs are opt-in.  The low-pass sits at twice the rate
    offset: the first mixer cross family at f_rx/N (244 kHz) then falls in
    the stopband and no reference premix is needed.
    """
    return SounderPreset(
        name="full",
        pn_spec=preset(11),
        config=CorrelatorConfig(
            tx_chip_rate=500e6,
            rx_chip_rate=rx_chip_rate_from_divider(1999.75e6, 4),
            code_length=2047,
            lpf_cutoff=125e3,
        ),
        samples_per_chip=4,
    )


def get_preset(name: str) -> SounderPreset:
    try:
        return {"desk": desk_preset, "full": full_preset}[name]()
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose desk or full") from None


# ---------------------------------------------------------------------------
# dilated CIR container
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DilatedCir:
    """One dilated period of the compressed I/Q channel impulse response."""

    i_channel: np.ndarray
    q_channel: np.ndarray
    compressed_bandwidth: float  # chip-rate offset, Hz
    slide_factor: float
    dilated_period: float  # seconds
    sample_rate: float  # compressed-domain sample rate, Hz

    def __post_init__(self) -> None:
        i = np.asarray(self.i_channel, dtype=np.float64)
        q = np.asarray(self.q_channel, dtype=np.float64)
        if i.shape != q.shape or i.ndim != 1:
            raise ConfigError("i/q channels must be matching 1-D vectors")
        object.__setattr__(self, "i_channel", i)
        object.__setattr__(self, "q_channel", q)

    def __len__(self) -> int:
        return int(self.i_channel.size)

    @property
    def cir(self) -> np.ndarray:
        return self.i_channel + 1j * self.q_channel

    @property
    def compressed_time(self) -> np.ndarray:
        return np.arange(len(self)) / self.sample_rate

    @property
    def excess_delay(self) -> np.ndarray:
        """True-delay axis: compressed time divided by the slide factor."""
        return self.compressed_time / self.slide_factor

    @property
    def samples_per_chip(self) -> int:
        return COMPRESSED_SAMPLES_PER_CHIP


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------


def _integer(value: float, what: str) -> int:
    n = round(value)
    if abs(value - n) > 1e-6:
        raise SimulationError(f"{what} must work out to an integer, got {value}")
    return int(n)


def _validate_geometry(w: SampledWaveform, cfg: CorrelatorConfig) -> tuple[int, int, int]:
    """Common length/rate checks; returns (dilated samples, decim step, gamma)."""
    fs = w.sample_rate
    if fs < 2.0 * cfg.tx_chip_rate:
        raise SimulationError(
            f"sample rate {fs} below 2x the tx chip rate {cfg.tx_chip_rate}"
        )
    d = _integer(dilated_period(cfg) * fs, "samples per dilated period")
    step = _integer(fs / cfg.compressed_sample_rate, "decimation factor")
    gamma = _integer(slide_factor(cfg), "slide factor")
    return d, step, gamma


def _zero_phase_spectrum(taps: np.ndarray, n: int) -> np.ndarray:
    """Circular frequency response of a centred (group-delay-free) kernel."""
    if taps.size > n:
        raise SimulationError("record shorter than the filter kernel")
    kernel = np.zeros(n)
    kernel[: taps.size] = taps
    kernel = np.roll(kernel, -((taps.size - 1) // 2))
    return sfft.fft(kernel)


def _lpf_taps(cfg: CorrelatorConfig, fs: float) -> np.ndarray:
    # Narrow transition centred on the cutoff keeps the noise-equivalent
    # bandwidth within 0.1 dB of 2 x lpf_cutoff (the processing-gain math
    # depends on that).
    return design_lowpass_taps(cfg.lpf_cutoff, fs, transition=cfg.lpf_cutoff / 4.0)


@functools.lru_cache(maxsize=16)
def _lpf_spectrum(cfg: CorrelatorConfig, fs: float, n: int) -> np.ndarray:
    """Cached circular response of the correlator low-pass (do not mutate)."""
    return _zero_phase_spectrum(_lpf_taps(cfg, fs), n)


@functools.lru_cache(maxsize=16)
def _reference_period_cached(
    cfg: CorrelatorConfig, fs: float, pn: ChipSequence
) -> np.ndarray | None:
    return _reference_period(cfg, fs, pn)


def _reference_period(cfg: CorrelatorConfig, fs: float, pn: ChipSequence) -> np.ndarray | None:
    """One grid-exact period of the local (slow) code.

    Returns None when the slow code is not periodic on the sample grid (then
    only the full dilated record represents it exactly).
    """
    p2 = cfg.code_length * fs / cfg.rx_chip_rate
    if abs(p2 - round(p2)) > 1e-6:
        return None
    p2 = int(round(p2))
    idx = (np.arange(p2, dtype=np.float64) * (cfg.rx_chip_rate / fs)).astype(np.int64)
    idx %= cfg.code_length
    return pn.chips[idx].astype(np.float64)


def _reference_full(
    cfg: CorrelatorConfig,
    fs: float,
    pn: ChipSequence,
    d: int,
    tick: Callable[[float], None],
) -> np.ndarray:
    """Local code waveform over the whole dilated record."""
    period = _reference_period(cfg, fs, pn)
    if period is not None:
        reps = _integer(d / period.size, "code periods per dilated period")
        return np.tile(period, reps)
    chips = pn.chips.astype(np.float64)
    ratio = cfg.rx_chip_rate / fs
    raw = np.empty(d)
    for start in range(0, d, _CHUNK):
        stop = min(start + _CHUNK, d)
        idx = (np.arange(start, stop, dtype=np.float64) * ratio).astype(np.int64)
        idx %= cfg.code_length
        raw[start:stop] = chips[idx]
        tick(0.15 * stop / d)
    return raw


def _make_cir(compressed: np.ndarray, cfg: CorrelatorConfig) -> DilatedCir:
    return DilatedCir(
        i_channel=compressed.real,
        q_channel=compressed.imag,
        compressed_bandwidth=cfg.rate_offset,
        slide_factor=slide_factor(cfg),
        dilated_period=dilated_period(cfg),
        sample_rate=cfg.compressed_sample_rate,
    )


# ---------------------------------------------------------------------------
# literal mixer
# ---------------------------------------------------------------------------


def correlate_literal(
    rx_wave: SampledWaveform,
    cfg: CorrelatorConfig,
    pn: ChipSequence,
    progress: Callable[[float], bool] | None = None,
) -> DilatedCir:
    """Sample-by-sample sliding mixer, the ground-truth receiver.

    Pipeline: multiply by the locally generated slower PN waveform (premixed
    when the config says so), low-pass at ``cfg.lpf_cutoff`` (circular FIR:
    both code cycles complete an integer number of laps per dilated period,
    so the signal product is periodic), decimate to 16 samples per
    chip-equivalent, emit one dilated period.

    ``progress`` is called with a completed fraction after each block; return
    False to cancel the run.
    """
    if len(pn) != cfg.code_length:
        raise ConfigError(f"code length mismatch: {len(pn)} vs config {cfg.code_length}")
    fs = rx_wave.sample_rate
    d, step, _ = _validate_geometry(rx_wave, cfg)
    if len(rx_wave) < d:
        raise SimulationError(
            f"record of {len(rx_wave)} samples shorter than one dilated period ({d})"
        )

    def tick(frac: float) -> None:
        if progress is not None and progress(min(frac, 1.0)) is False:
            raise OperationCancelled("sliding correlation cancelled")

    reference = _reference_full(cfg, fs, pn, d, tick)
    record = rx_wave.samples
    mixed = np.empty(d, dtype=np.complex128)
    for start in range(0, d, _CHUNK):
        stop = min(start + _CHUNK, d)
        mixed[start:stop] = record[start:stop] * reference[start:stop]
        tick(0.15 + 0.45 * stop / d)

    spectrum = sfft.fft(mixed)
    spectrum *= _lpf_spectrum(cfg, fs, d)
    tick(0.85)
    filtered = sfft.ifft(spectrum)
    tick(1.0)
    return _make_cir(filtered[::step], cfg)


# ---------------------------------------------------------------------------
# fast equivalent
# ---------------------------------------------------------------------------


def _fold(rx_wave: SampledWaveform, p: int) -> np.ndarray:
    folds = len(rx_wave) // p
    if folds < 1:
        raise SimulationError(
            f"record of {len(rx_wave)} samples shorter than one code period ({p})"
        )
    return rx_wave.samples[: folds * p].reshape(folds, p).mean(axis=0)


@functools.lru_cache(maxsize=8)
def _composition_plan(cfg: CorrelatorConfig, fs: float, p1: int, p2: int):
    """Precomputed line-collision indices for the mixer-spectrum composition.

    Returns (j_idx, i_idx) of shape (collisions, D), the low-pass response
    sampled on the product-line grid, and the fold indices onto the output
    spectrum.  Depends only on the config and sample rate, so it is cached
    across calls.
    """
    d = _integer(dilated_period(cfg) * fs, "samples per dilated period")
    step = _integer(fs / cfg.compressed_sample_rate, "decimation factor")
    gamma = _integer(slide_factor(cfg), "slide factor")
    per_bin = _integer(p1 * p2 / d, "line collisions per bin")
    ks = np.arange(-(d // 2), d - d // 2)
    base_j = np.mod(ks, gamma - 1)
    j_idx = np.empty((per_bin, d), dtype=np.int64)
    i_idx = np.empty((per_bin, d), dtype=np.int64)
    for t in range(per_bin):
        j = base_j + (gamma - 1) * t
        j_idx[t] = np.mod(j, p1)
        i_idx[t] = np.mod((ks - gamma * j) // (gamma - 1), p2)
    h_band = _lpf_spectrum(cfg, fs, d)[np.mod(ks, d)]
    fold = np.mod(ks, d // step)
    return j_idx, i_idx, h_band, fold, d // step


def _compose_mixer_spectrum(
    folded: np.ndarray,
    reference_period: np.ndarray,
    cfg: CorrelatorConfig,
    fs: float,
) -> np.ndarray:
    """Exact spectral reconstruction of the mixer output from one period.

    Over one dilated period the received signal repeats every P1 samples
    (spectral lines on bins gamma * j) and the local code every P2 samples
    (lines on bins (gamma - 1) * i).  Every product line therefore lands on
    an integer bin k = gamma*j + (gamma-1)*i (mod D), with exactly
    P1*P2/D solutions per bin; summing them and applying the low-pass
    reproduces the literal mixer's spectrum bin for bin.  The decimated
    output is the inverse FFT of the product spectrum folded onto the
    output grid.
    """
    p1 = folded.size
    p2 = reference_period.size
    r_lines = sfft.fft(folded) / p1
    c_lines = sfft.fft(reference_period) / p2

    j_idx, i_idx, h_band, fold, m = _composition_plan(cfg, fs, p1, p2)
    a = np.zeros(fold.size, dtype=np.complex128)
    for t in range(j_idx.shape[0]):
        a += r_lines[j_idx[t]] * c_lines[i_idx[t]]
    a *= h_band
    out_spec = np.bincount(fold, weights=a.real, minlength=m) + 1j * np.bincount(
        fold, weights=a.imag, minlength=m
    )
    return m * sfft.ifft(out_spec)


def _folded_template_correlation(
    folded: np.ndarray, cfg: CorrelatorConfig, fs: float, pn: ChipSequence
) -> np.ndarray:
    """Cyclic correlation against the transmit template, mixer-shaped.

    Used when the slow code has no grid-exact period.  The lag profile is
    interpolated onto the compressed grid through a low-pass of the same
    family and cutoff as the literal path (designed at the compressed output
    rate) plus a box average one simulation sample wide, which emulates the
    mixer's chip-edge quantisation.
    """
    p = folded.size
    spc = _integer(fs / cfg.tx_chip_rate, "samples per tx chip")
    template = np.repeat(pn.chips.astype(np.float64), spc)
    corr = sfft.ifft(sfft.fft(folded) * np.conj(sfft.fft(template))) / p

    m = COMPRESSED_SAMPLES_PER_CHIP * cfg.code_length
    up = _integer(m / p, "lag-axis upsampling ratio")
    out_rate = cfg.compressed_sample_rate
    taps_c = design_lowpass_taps(cfg.lpf_cutoff, out_rate, transition=cfg.lpf_cutoff / 4.0)
    shaped = np.tile(sfft.fft(corr), up) * _zero_phase_spectrum(taps_c, m)
    # same low-pass family as the literal path, designed at the output rate
    if up > 1:
        # chip-edge jitter of the unfiltered slow code: one sample at fs,
        # i.e. `up` bins on the compressed grid
        box = np.zeros(m)
        box[:up] = 1.0 / up
        shaped *= sfft.fft(np.roll(box, -(up // 2)))
    return up * sfft.ifft(shaped)


def correlate_fast(
    rx_wave: SampledWaveform, cfg: CorrelatorConfig, pn: ChipSequence
) -> DilatedCir:
    """Computationally cheap equivalent of :func:`correlate_literal`.

    Needs only one code period of input (more periods are folded before
    processing).  When the slow code is grid-periodic this reconstructs the
    literal mixer output exactly (see ``_compose_mixer_spectrum``), so the
    two paths agree to numerical precision for the periodic signal part;
    noise enters folded rather than streamed.
    """
    if len(pn) != cfg.code_length:
        raise ConfigError(f"code length mismatch: {len(pn)} vs config {cfg.code_length}")
    fs = rx_wave.sample_rate
    d, step, gamma = _validate_geometry(rx_wave, cfg)
    spc = _integer(fs / cfg.tx_chip_rate, "samples per tx chip")
    folded = _fold(rx_wave, cfg.code_length * spc)

    reference_period = _reference_period_cached(cfg, fs, pn)
    composable = reference_period is not None and (cfg.code_length * spc) % (gamma - 1) == 0
    if composable:
        compressed = _compose_mixer_spectrum(folded, reference_period, cfg, fs)
    else:
        compressed = _folded_template_correlation(folded, cfg, fs, pn)
    return _make_cir(compressed, cfg)


def write_cir_csv(cir: DilatedCir, path, cfg: CorrelatorConfig | None = None) -> None:
    """CSV export: '#'-prefixed metadata rows, then compressed_time_s,i,q."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# slide_factor={cir.slide_factor:.10g}\n")
        fh.write(f"# compressed_bandwidth_hz={cir.compressed_bandwidth:.10g}\n")
        fh.write(f"# dilated_period_s={cir.dilated_period:.10g}\n")
        fh.write(f"# sample_rate_hz={cir.sample_rate:.10g}\n")
        if cfg is not None:
            fh.write(f"# tx_chip_rate_hz={cfg.tx_chip_rate:.10g}\n")
            fh.write(f"# rx_chip_rate_hz={cfg.rx_chip_rate:.10g}\n")
            fh.write(f"# code_length={cfg.code_length}\n")
            fh.write(f"# lpf_cutoff_hz={cfg.lpf_cutoff:.10g}\n")
        fh.write("compressed_time_s,i,q\n")
        for t, i, q in zip(cir.compressed_time, cir.i_channel, cir.q_channel):
            fh.write(f"{t:.10g},{i:.10g},{q:.10g}\n")
