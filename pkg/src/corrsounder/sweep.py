"""Azimuth sweeps over synthetic channels and the measurement analysis ops.

``run_sweep`` reproduces the measurement procedure: the receive horn steps
around the azimuth circle in HPBW increments, several identical sweeps are
recorded per location, and each acquisition runs through the correlator and
PDP pipeline.  Analysis operations then reduce sweep sets to omnidirectional
power, path loss, close-in-reference fits, local-area statistics and fading
rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import ScenarioConfig, apply_channel, fspl, synthesize_channel
from .correlator import (
    SounderPreset,
    correlate_fast,
    correlate_literal,
    processing_gain,
)
from .errors import AnalysisError, ConfigError
from .pdp import (
    PowerDelayProfile,
    average_pdps,
    pdp_from_iq,
    system_pulse_energy_bins,
    threshold_pdp,
)

__all__ = [
    "DirectionalRecord",
    "SweepSet",
    "CiFit",
    "LinkBudget",
    "ABSENT_POWER_DBM",
    "run_sweep",
    "omni_power",
    "path_loss",
    "eirp",
    "ci_fit",
    "local_power_std",
    "fading_rate",
    "max_measurable_path_loss",
    "averaging_gain_db",
    "noise_floor_dbm",
    "angular_spectrum",
]

#: Sentinel emitted for sweep angles with no detectable signal.
ABSENT_POWER_DBM = -250.0


@dataclass(frozen=True, eq=False)
class DirectionalRecord:
    """All sweeps' thresholded PDPs for one receive pointing azimuth."""

    rx_azimuth_deg: float
    pdps: tuple[PowerDelayProfile, ...]
    best_power_dbm: float | None = None

    @staticmethod
    def from_pdps(azimuth: float, pdps: list[PowerDelayProfile]) -> "DirectionalRecord":
        powers = [p.total_power_dbm for p in pdps if p.total_power_dbm is not None]
        return DirectionalRecord(
            rx_azimuth_deg=azimuth % 360.0,
            pdps=tuple(pdps),
            best_power_dbm=max(powers) if powers else None,
        )


@dataclass(frozen=True, eq=False)
class SweepSet:
    """Per-angle directional records for one TX-RX combination."""

    records: tuple[DirectionalRecord, ...]
    rx_ident: str
    tx_pointing_deg: tuple[float, float]
    rx_elevation_deg: float
    step_deg: float


def _angle_grid(step: float, start: float = 0.0) -> list[float]:
    spokes = 360.0 / step
    if abs(spokes - round(spokes)) > 1e-9:
        raise ConfigError(f"azimuth step {step} must divide 360 degrees")
    return [(start + k * step) % 360.0 for k in range(int(round(spokes)))]


def run_sweep(
    sc: ScenarioConfig,
    rx_index: int,
    step_deg: float,
    sweeps: int,
    seed: int,
    preset: SounderPreset,
    averages: int = 1,
    method: str = "fast",
    vary_noise_per_sweep: bool = True,
) -> SweepSet:
    """One receiver location, ``sweeps`` consecutive azimuth sweeps.

    The angle grid starts at the spoke nearest the strongest path's arrival
    azimuth (the operator's best-pointing convention); power analyses are
    invariant to that rotation.  Each (angle, sweep) acquisition applies the
    channel with independently seeded noise, correlates (``method`` picks the
    fast equivalent or the literal mixer), averages ``averages`` captures
    non-coherently and thresholds the result.  Angles whose thresholded PDP
    keeps no sample are recorded as signal-absent.
    """
    if sweeps < 1:
        raise ConfigError("sweeps must be >= 1")
    if averages < 1:
        raise ConfigError("averages must be >= 1")
    if method not in ("fast", "literal"):
        raise ConfigError(f"unknown correlation method {method!r}")
    rx_loc = sc.rx_locations[rx_index]
    channel = synthesize_channel(sc, rx_index)

    tx_az, tx_el = sc.tx_pointing_for(rx_loc)
    tx_pattern = sc.tx_pattern.pointed(tx_az, tx_el)

    start = 0.0
    if channel.paths:
        strongest = max(channel.paths, key=lambda p: p.gain)
        start = round(strongest.aoa_az_deg / step_deg) * step_deg
    grid = _angle_grid(step_deg, start)

    amplitude = math.sqrt(10.0 ** (sc.tx_power_dbm / 10.0))
    base = preset.transmit_waveform()
    wave = replace(base, samples=base.samples * amplitude)
    chips = preset.chip_sequence()
    pulse_bins = system_pulse_energy_bins(preset)
    correlate = correlate_fast if method == "fast" else correlate_literal
    noise_psd = sc.effective_noise_psd_dbm_hz

    records = []
    for ai, azimuth in enumerate(grid):
        rx_pattern = sc.rx_pattern.pointed(azimuth, sc.rx_elevation_deg)
        per_sweep: list[PowerDelayProfile] = []
        for s in range(sweeps):
            noise_key = s if vary_noise_per_sweep else 0
            acquisitions = []
            for a in range(averages):
                rng = np.random.default_rng((seed, rx_index, ai, noise_key, a))
                received = apply_channel(wave, channel, tx_pattern, rx_pattern, noise_psd, rng)
                cir = correlate(received, preset.config, chips)
                acquisitions.append(
                    pdp_from_iq(
                        cir, pulse_bins, angle=azimuth, location=rx_loc.ident, sweep=s
                    )
                )
            averaged = acquisitions[0] if averages == 1 else average_pdps(acquisitions)
            per_sweep.append(threshold_pdp(averaged))
        records.append(DirectionalRecord.from_pdps(azimuth, per_sweep))

    return SweepSet(
        records=tuple(records),
        rx_ident=rx_loc.ident,
        tx_pointing_deg=(tx_az, tx_el),
        rx_elevation_deg=sc.rx_elevation_deg,
        step_deg=step_deg,
    )


def omni_power(ss: SweepSet) -> float | None:
    """Linear sum of the per-angle best directional powers, in dBm.

    Returns None when no angle carries signal.  Adjacent-beam overlap is not
    corrected for; the documented upward bias is bounded by the pattern's
    sidelobe floor.
    """
    powers = [r.best_power_dbm for r in ss.records if r.best_power_dbm is not None]
    if not powers:
        return None
    return 10.0 * math.log10(sum(10.0 ** (p / 10.0) for p in powers))


def path_loss(
    omni_dbm: float, tx_power_dbm: float, tx_gain_dbi: float, rx_gain_dbi: float
) -> float:
    """Isotropic-referenced path loss: antenna gains removed from the link."""
    return tx_power_dbm + tx_gain_dbi + rx_gain_dbi - omni_dbm


def eirp(tx_power_dbm: float, tx_gain_dbi: float) -> float:
    return tx_power_dbm + tx_gain_dbi


@dataclass(frozen=True)
class CiFit:
    """Close-in free-space reference distance fit: PL = FSPL(d0) + 10 n log10(d/d0)."""

    ple: float
    sigma_db: float
    frequency_hz: float
    point_count: int
    d0_m: float = 1.0


def ci_fit(points: list[tuple[float, float]], f: float) -> CiFit:
    """Least-squares path-loss exponent through the 1 m free-space anchor.

    Single-parameter fit: n = sum(a_i x_i) / sum(x_i^2) with
    x_i = 10 log10(d_i) and a_i the path loss above FSPL(1 m); sigma is the
    RMS shadow-fading residual.
    """
    if len(points) < 2:
        raise AnalysisError("CI fit needs at least two points")
    d = np.asarray([p[0] for p in points], dtype=float)
    pl = np.asarray([p[1] for p in points], dtype=float)
    if (d <= 1.0).any():
        raise AnalysisError("CI fit distances must exceed the 1 m reference")
    anchor = fspl(1.0, f)
    x = 10.0 * np.log10(d)
    if np.allclose(x, x[0]):
        raise AnalysisError("CI fit is ill-conditioned: all distances equal")
    ple = float(np.dot(pl - anchor, x) / np.dot(x, x))
    residual = pl - anchor - ple * x
    sigma = float(np.sqrt(np.mean(residual**2)))
    return CiFit(ple=ple, sigma_db=sigma, frequency_hz=f, point_count=len(points))


def local_power_std(omni_powers_dbm: list[float]) -> float:
    """Sample standard deviation of received powers, in dB."""
    if len(omni_powers_dbm) < 2:
        raise AnalysisError("need at least two powers for a standard deviation")
    return float(np.std(np.asarray(omni_powers_dbm, dtype=float), ddof=1))


def fading_rate(
    route: list[tuple[float, float]], speed_mps: float
) -> tuple[float, float]:
    """Power decay rate over the longest contiguous decreasing run.

    ``route`` holds (position along path in metres, omni power in dBm) with
    strictly increasing positions.  Returns (dB/m, dB/s); dB/s is exactly
    dB/m times the speed.  A route with no decreasing pair yields zero rates.
    """
    if len(route) < 2:
        raise AnalysisError("fading rate needs at least two route points")
    pos = [p for p, _ in route]
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise AnalysisError("route positions must be strictly increasing")

    best: tuple[int, int] | None = None  # (start, stop) inclusive
    start = 0
    for i in range(1, len(route) + 1):
        if i == len(route) or route[i][1] >= route[i - 1][1]:
            if i - 1 > start:
                if best is None:
                    best = (start, i - 1)
                else:
                    length = i - 1 - start
                    best_len = best[1] - best[0]
                    drop = route[start][1] - route[i - 1][1]
                    best_drop = route[best[0]][1] - route[best[1]][1]
                    if length > best_len or (length == best_len and drop > best_drop):
                        best = (start, i - 1)
            start = i
    if best is None:
        return 0.0, 0.0
    a, b = best
    db_per_m = (route[a][1] - route[b][1]) / (route[b][0] - route[a][0])
    return db_per_m, db_per_m * speed_mps


@dataclass(frozen=True)
class LinkBudget:
    """Terms of the maximum-measurable-path-loss budget.

    ``noise_floor_dbm`` is referenced to the acquisition bandwidth of the
    digitizer (the simulation sample rate) so that the processing and
    averaging gains appear explicitly as separate terms.
    """

    tx_power_dbm: float
    tx_gain_dbi: float
    rx_gain_dbi: float
    processing_gain_db: float
    averaging_gain_db: float
    noise_floor_dbm: float
    snr_threshold_db: float = 5.0

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"link budget field {name} must be finite")

    @staticmethod
    def full_preset_budget() -> "LinkBudget":
        """Budget of the 500 Mcps configuration: 14.6 dBm TX, 27 dBi horns
        both ends, slide factor 8000, 20-profile averaging, thermal floor
        with a 5 dB noise figure over the 2 GS/s acquisition bandwidth."""
        return LinkBudget(
            tx_power_dbm=14.6,
            tx_gain_dbi=27.0,
            rx_gain_dbi=27.0,
            processing_gain_db=processing_gain(8000.0),
            averaging_gain_db=averaging_gain_db(20),
            noise_floor_dbm=noise_floor_dbm(2e9, noise_figure_db=5.0),
        )


def noise_floor_dbm(bandwidth_hz: float, noise_figure_db: float = 0.0) -> float:
    """Thermal noise floor -174 dBm/Hz + 10 log10(B) + NF."""
    if bandwidth_hz <= 0:
        raise ConfigError("bandwidth must be positive")
    return -174.0 + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def averaging_gain_db(count: int) -> float:
    """Non-coherent averaging SNR improvement, 10 log10(sqrt(count))."""
    if count < 1:
        raise ConfigError("averaging count must be >= 1")
    return 10.0 * math.log10(math.sqrt(count))


def max_measurable_path_loss(lb: LinkBudget) -> float:
    """TX power + antenna gains + processing + averaging - (floor + SNR)."""
    return (
        lb.tx_power_dbm
        + lb.tx_gain_dbi
        + lb.rx_gain_dbi
        + lb.processing_gain_db
        + lb.averaging_gain_db
        - (lb.noise_floor_dbm + lb.snr_threshold_db)
    )


def angular_spectrum(ss: SweepSet) -> list[tuple[float, float]]:
    """Per-angle best power table; absent angles carry the floor sentinel."""
    table = [
        (r.rx_azimuth_deg, r.best_power_dbm if r.best_power_dbm is not None else ABSENT_POWER_DBM)
        for r in ss.records
    ]
    return sorted(table)
