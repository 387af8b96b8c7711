"""Clock synchronization error budgets and simulation for hybrid
wired/wireless time-sensitive networks.

The package models a grandmaster-to-endpoint chain hop by hop: hardware
timestamping quantization on each medium, cross-domain counter translation
inside wireless bridges, multipath-induced arrival detection error, and the
servo loop that disciplines every slave clock.  An analytic module gives
worst-case budgets for the same chains the simulator runs, so the two views
can be checked against each other.
"""

from .budget import (
    CHAIN_PRESETS,
    HopBudget,
    budget_report,
    chain_max_error,
    chain_preset,
    hop_max_error,
    wireless_link_budget,
)
from .cdc import CdcConfig, CdcFeasibilityError, CdcStage, phc_translation_bounds, translate_time
from .channel import (
    CHANNEL_CATALOG,
    ChannelRealization,
    FadingConfig,
    FadingProcess,
    LinkGeometry,
    PowerDelayProfile,
    build_pdp,
    coherence_time_s,
    detect_arrival,
    detected_excess_series,
    doppler_from_speed,
    propagation_delay_ns,
    realize_channel,
    rms_delay_spread,
    tap_gain_series,
)
from .clocks import (
    ClockModel,
    Direction,
    PhcState,
    ServoState,
    Timestamp,
    advance_drift,
    quantize_timestamp,
    quantize_value,
    read_clock,
    servo_update,
)
from .protocol import (
    PROTOCOL_PRESETS,
    ProtocolConfig,
    SyncSample,
    estimate_offset,
    estimate_path_delay,
    ftm_burst,
    one_way_beacon,
    two_way_exchange,
)
from .sim import (
    ExperimentConfig,
    HopSpec,
    NodeSpec,
    PortSpec,
    RunStats,
    SIM_PRESETS,
    Topology,
    build_topology,
    compute_stats,
    pps_error,
    run_experiment,
    topology_budget,
)

__version__ = "0.1.0"

__all__ = [
    "CHAIN_PRESETS",
    "CHANNEL_CATALOG",
    "CdcConfig",
    "CdcFeasibilityError",
    "CdcStage",
    "ChannelRealization",
    "ClockModel",
    "Direction",
    "ExperimentConfig",
    "FadingConfig",
    "FadingProcess",
    "HopBudget",
    "HopSpec",
    "LinkGeometry",
    "NodeSpec",
    "PROTOCOL_PRESETS",
    "PhcState",
    "PortSpec",
    "PowerDelayProfile",
    "ProtocolConfig",
    "RunStats",
    "SIM_PRESETS",
    "ServoState",
    "SyncSample",
    "Timestamp",
    "Topology",
    "advance_drift",
    "budget_report",
    "build_pdp",
    "build_topology",
    "chain_max_error",
    "chain_preset",
    "coherence_time_s",
    "compute_stats",
    "detect_arrival",
    "detected_excess_series",
    "doppler_from_speed",
    "estimate_offset",
    "estimate_path_delay",
    "ftm_burst",
    "hop_max_error",
    "one_way_beacon",
    "phc_translation_bounds",
    "pps_error",
    "propagation_delay_ns",
    "quantize_timestamp",
    "quantize_value",
    "read_clock",
    "realize_channel",
    "rms_delay_spread",
    "run_experiment",
    "servo_update",
    "tap_gain_series",
    "topology_budget",
    "translate_time",
    "two_way_exchange",
    "wireless_link_budget",
    "__version__",
]
