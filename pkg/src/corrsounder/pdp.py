"""Power delay profiles: calibration, thresholding, averaging, drift.

A PDP is I^2 + Q^2 of a dilated CIR versus true excess delay (the compressed
time axis divided by the slide factor).  Sample powers are linear milliwatts
under the package convention that unit sample power is 0 dBm.

``total_power`` is calibrated to resolvable-path power: the correlator
spreads each path over a two-chip-wide correlation pulse (triangle), so the
plain sum over bins overstates the received power by the pulse's energy
footprint.  The sum is divided by that factor (``pulse_energy_bins``) so a
single unit path integrates back to its peak power.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .correlator import (
    COMPRESSED_SAMPLES_PER_CHIP,
    DilatedCir,
    SounderPreset,
    correlate_fast,
)
from .errors import AnalysisError, ConfigError

__all__ = [
    "PowerDelayProfile",
    "DriftModel",
    "pdp_from_iq",
    "average_pdps",
    "estimate_noise_floor",
    "threshold_pdp",
    "apply_drift",
    "align_acquisitions",
    "write_pdp_csv",
    "pulse_energy_bins",
    "system_pulse_energy_bins",
]

log = logging.getLogger(__name__)

#: Bins below max(peak - PEAK_WINDOW_DB, floor + SNR_MARGIN_DB) are zeroed.
PEAK_WINDOW_DB = 20.0
SNR_MARGIN_DB = 5.0


def pulse_energy_bins(samples_per_chip: int = COMPRESSED_SAMPLES_PER_CHIP) -> float:
    """Energy footprint of the triangular chip correlation pulse, in bins.

    sum_k (1 - |k|/S)^2 over integer k, S = samples per chip-equivalent.
    """
    s = samples_per_chip
    return 1.0 + 2.0 * sum((1.0 - j / s) ** 2 for j in range(1, s))


def _dbm(power_mw: float) -> float:
    return -math.inf if power_mw <= 0.0 else 10.0 * math.log10(power_mw)


@dataclass(frozen=True, eq=False)
class PowerDelayProfile:
    power_mw: np.ndarray
    excess_delay_s: np.ndarray
    noise_floor_dbm: float | None = None
    threshold_dbm: float | None = None
    total_power_dbm: float | None = None
    pulse_bins: float = 1.0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        p = np.asarray(self.power_mw, dtype=np.float64)
        d = np.asarray(self.excess_delay_s, dtype=np.float64)
        if p.shape != d.shape or p.ndim != 1:
            raise ConfigError("power and delay axes must be matching 1-D vectors")
        if p.size >= 2:
            steps = np.diff(d)
            if not np.allclose(steps, steps[0], rtol=1e-9, atol=1e-18):
                raise ConfigError("excess delay axis must be uniform")
        object.__setattr__(self, "power_mw", p)
        object.__setattr__(self, "excess_delay_s", d)

    def __len__(self) -> int:
        return int(self.power_mw.size)

    @property
    def peak_power_dbm(self) -> float:
        return _dbm(float(self.power_mw.max(initial=0.0)))

    @property
    def delay_step_s(self) -> float:
        return float(self.excess_delay_s[1] - self.excess_delay_s[0]) if len(self) > 1 else 0.0

    @property
    def has_signal(self) -> bool:
        return self.total_power_dbm is not None


def pdp_from_iq(
    cir: DilatedCir, pulse_bins: float | None = None, **metadata
) -> PowerDelayProfile:
    """I^2 + Q^2 against the de-dilated (true excess delay) axis.

    ``pulse_bins`` overrides the analytic triangular pulse footprint with a
    measured one (the correlator's filters widen the pulse slightly).
    """
    power = cir.i_channel**2 + cir.q_channel**2
    return PowerDelayProfile(
        power_mw=power,
        excess_delay_s=cir.excess_delay,
        pulse_bins=pulse_bins if pulse_bins is not None else pulse_energy_bins(cir.samples_per_chip),
        metadata=dict(metadata),
    )


def average_pdps(pdps: list[PowerDelayProfile]) -> PowerDelayProfile:
    """Element-wise linear mean (non-coherent averaging)."""
    if not pdps:
        raise AnalysisError("cannot average an empty set of PDPs")
    first = pdps[0]
    for other in pdps[1:]:
        if len(other) != len(first) or not np.allclose(
            other.excess_delay_s, first.excess_delay_s, rtol=1e-9, atol=1e-18
        ):
            raise AnalysisError("PDPs to average must share their delay axis")
    mean = np.mean([p.power_mw for p in pdps], axis=0)
    meta = dict(first.metadata)
    meta["averaged"] = len(pdps)
    return replace(first, power_mw=mean, metadata=meta)


def estimate_noise_floor(pdp: PowerDelayProfile) -> float:
    """Median power over the trailing 10% of the delay axis, in dBm.

    The tail of the (periodic) trace carries no constructed paths, so its
    median is a multipath-robust floor estimate.  Returns -inf for a
    zero-noise profile.
    """
    if len(pdp) < 100:
        raise AnalysisError(f"need >= 100 samples to estimate a noise floor, got {len(pdp)}")
    tail = pdp.power_mw[-(len(pdp) // 10) :]
    return _dbm(float(np.median(tail)))


def threshold_pdp(pdp: PowerDelayProfile) -> PowerDelayProfile:
    """Apply the max(peak - 20 dB, floor + 5 dB) threshold rule.

    Samples below the threshold are zeroed.  ``total_power_dbm`` integrates
    the survivors (divided by the pulse energy footprint, see module doc);
    it stays None when nothing survives, which downstream code treats as a
    signal-absent acquisition.
    """
    floor = pdp.noise_floor_dbm
    if floor is None:
        floor = estimate_noise_floor(pdp)
    peak = pdp.peak_power_dbm
    threshold = max(peak - PEAK_WINDOW_DB, floor + SNR_MARGIN_DB)
    surviving = np.where(
        pdp.power_mw >= 10.0 ** (threshold / 10.0), pdp.power_mw, 0.0
    )
    total = float(surviving.sum()) / pdp.pulse_bins
    return replace(
        pdp,
        power_mw=surviving,
        noise_floor_dbm=floor,
        threshold_dbm=threshold,
        total_power_dbm=_dbm(total) if surviving.any() else None,
    )


@functools.lru_cache(maxsize=8)
def system_pulse_energy_bins(preset: SounderPreset) -> float:
    """Energy footprint (in bins) of a preset's single-path pulse.

    Runs the noiseless identity channel through the correlator and the
    thresholding rule, then divides the surviving power sum by the peak.
    Passing the result as ``pulse_bins`` to :func:`pdp_from_iq` makes a
    thresholded single-path total integrate back to the path's peak power.
    """
    wave = preset.transmit_waveform()
    cir = correlate_fast(wave, preset.config, preset.chip_sequence())
    out = threshold_pdp(pdp_from_iq(cir, pulse_bins=1.0))
    peak = 10.0 ** (out.peak_power_dbm / 10.0)
    return float(out.power_mw.sum() / peak)


@dataclass(frozen=True)
class DriftModel:
    """Relative frequency offset between the TX and RX reference clocks."""

    fractional_frequency_offset: float = 0.0
    training_state: str = "trained"  # trained | free_running
    time_since_sync_s: float = 0.0

    def __post_init__(self) -> None:
        if self.training_state not in ("trained", "free_running"):
            raise ConfigError("training_state must be 'trained' or 'free_running'")
        if self.training_state == "trained" and self.fractional_frequency_offset != 0.0:
            raise ConfigError("a trained reference has zero frequency offset")


def apply_drift(
    acquisitions: list[DilatedCir], dm: DriftModel, inter_acquisition_gap_s: float
) -> list[DilatedCir]:
    """Shift the k-th acquisition by k * gap * offset of true time.

    Each acquisition is internally time coherent; drift only accumulates
    between captures.  True-time shifts map onto the compressed axis through
    the slide factor and are applied as integer circular sample shifts.
    """
    if inter_acquisition_gap_s < 0:
        raise ConfigError("inter-acquisition gap must be non-negative")
    out = []
    for k, cir in enumerate(acquisitions):
        true_shift = k * inter_acquisition_gap_s * dm.fractional_frequency_offset
        samples = int(round(true_shift * cir.slide_factor * cir.sample_rate))
        if samples == 0:
            out.append(cir)
        else:
            out.append(
                replace(
                    cir,
                    i_channel=np.roll(cir.i_channel, samples),
                    q_channel=np.roll(cir.q_channel, samples),
                )
            )
    return out


def align_acquisitions(pdps: list[PowerDelayProfile]) -> list[PowerDelayProfile]:
    """Put all strongest-path peaks on the timebase of the strongest capture.

    Each signal-bearing PDP is circularly shifted by an integer bin count so
    its strongest path lands on the anchor's strongest-path bin (residual
    error at most one bin).  Signal-free profiles pass through unchanged.
    """
    floors = []
    for p in pdps:
        floor = p.noise_floor_dbm if p.noise_floor_dbm is not None else estimate_noise_floor(p)
        floors.append(floor)
    detectable = [
        i
        for i, (p, floor) in enumerate(zip(pdps, floors))
        if p.peak_power_dbm >= floor + SNR_MARGIN_DB
    ]
    if len(detectable) < 2:
        if not detectable:
            log.warning("alignment skipped: no acquisition above its noise floor")
        return list(pdps)
    anchor = max(detectable, key=lambda i: pdps[i].peak_power_dbm)
    anchor_bin = int(np.argmax(pdps[anchor].power_mw))
    out = list(pdps)
    for i in detectable:
        shift = anchor_bin - int(np.argmax(pdps[i].power_mw))
        if shift:
            out[i] = replace(pdps[i], power_mw=np.roll(pdps[i].power_mw, shift))
    return out


def write_pdp_csv(pdp: PowerDelayProfile, path) -> None:
    """CSV export: '#'-prefixed metadata rows, then excess_delay_ns,power_dBm."""

    def fmt(value) -> str:
        return "" if value is None else f"{value:.10g}"

    with open(path, "w", newline="") as fh:
        fh.write(f"# noise_floor_dbm={fmt(pdp.noise_floor_dbm)}\n")
        fh.write(f"# threshold_dbm={fmt(pdp.threshold_dbm)}\n")
        fh.write(f"# total_power_dbm={fmt(pdp.total_power_dbm)}\n")
        for key in ("angle", "location", "sweep"):
            if key in pdp.metadata:
                fh.write(f"# {key}={pdp.metadata[key]}\n")
        fh.write("excess_delay_ns,power_dBm\n")
        for delay, power in zip(pdp.excess_delay_s, pdp.power_mw):
            fh.write(f"{delay * 1e9:.10g},{_dbm(power):.10g}\n")
