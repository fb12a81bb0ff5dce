"""Sliding-correlator wideband channel sounder simulator.

Synthesizes maximal-length PN probing waveforms, propagates them through
configurable multipath scenarios with steerable horn antennas, recovers
time-dilated channel impulse responses by sliding correlation, and runs the
measurement-analysis pipeline (power delay profiles, azimuth sweeps,
omnidirectional synthesis, close-in path-loss fits, local-area statistics).
"""

__version__ = "0.1.0"

from .channel import (
    AntennaPattern,
    MultipathChannel,
    PathComponent,
    Reflector,
    RxLocation,
    ScenarioConfig,
    Wall,
    apply_channel,
    fspl,
    fresnel_parameter,
    knife_edge_loss_db,
    pattern_gain,
    synthesize_channel,
)
from .correlator import (
    COMPRESSED_SAMPLES_PER_CHIP,
    CorrelatorConfig,
    DilatedCir,
    SounderPreset,
    correlate_fast,
    correlate_literal,
    desk_preset,
    dilated_period,
    full_preset,
    get_preset,
    processing_gain,
    rx_chip_rate_from_divider,
    slide_factor,
)
from .errors import AnalysisError, ConfigError, OperationCancelled, SimulationError, SounderError
from .pdp import (
    DriftModel,
    PowerDelayProfile,
    align_acquisitions,
    apply_drift,
    average_pdps,
    estimate_noise_floor,
    pdp_from_iq,
    threshold_pdp,
)
from .pn import (
    ChipSequence,
    LfsrSpec,
    generate_leapforward,
    generate_msequence,
    lfsr_step,
    periodic_autocorrelation,
)
from .scenario_io import (
    CampaignSpec,
    ResultBundle,
    emit_plot_data,
    load_scenario,
    run_campaign,
    save_scenario,
)
from .sweep import (
    ABSENT_POWER_DBM,
    CiFit,
    DirectionalRecord,
    LinkBudget,
    SweepSet,
    angular_spectrum,
    averaging_gain_db,
    ci_fit,
    eirp,
    fading_rate,
    local_power_std,
    max_measurable_path_loss,
    noise_floor_dbm,
    omni_power,
    path_loss,
    run_sweep,
)
from .waveform import SampledWaveform, lowpass, read_waveform, shift_trigger, upsample_chips, write_waveform
