"""Simulation and security analysis of bit-mapped gating for gated QKD detectors."""

__version__ = "0.1.0"

from .engine import (
    AfterGate,
    Blinding,
    ChannelModel,
    Honest,
    OptimalState,
    SimResult,
    TimeShift,
    run_simulation,
    strategy_from_dict,
)
from .measure import (
    MeasurementSetting,
    Povm,
    QubitState,
    averaged_povm,
    conditional_measurements,
    detection_probability,
    optimal_attack_state,
    povm_extremal_probabilities,
    qber_min,
)
from .monitor import MonitorConfig, click_probability, required_test_pulses, run_monitor
from .multiphoton import TwoPhotonScenario, inductive_extension_check, merged_qber, verify_bound
from .security import (
    SecurityReport,
    analyze,
    apply_mode_coupling,
    binary_entropy,
    in_gate_fraction,
    optimize_threshold,
    rate_patched,
    rate_unpatched,
)
from .temporal import (
    ModeSubset,
    TemporalResponse,
    blinding_parameter,
    load_response,
    subset_where_qber_below,
)
