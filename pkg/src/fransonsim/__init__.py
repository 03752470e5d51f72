"""Monte Carlo simulator and analysis toolkit for long-distance
energy-time Bell tests over telecom fiber.

The package is organized in four layers: `model` holds the closed-form
fringe and envelope physics, `scenario` describes an apparatus,
`montecarlo` simulates it event by event, and `analysis` reduces scan
data to visibilities and a Bell verdict.  `cli` drives everything from
the command line.
"""

from .analysis import (
    BellReport,
    EnvelopeFit,
    FringeFit,
    SubtractionResult,
    accidental_level,
    accidental_rate_estimate,
    bell_report,
    bootstrap_visibility_sigma,
    fit_envelope,
    fit_fringe,
    fit_fringe_xy,
    fourier_significant_frequencies,
    fourier_significant_frequencies_xy,
    subtract_accidentals,
    subtract_accidentals_xy,
    three_peak_areas,
)
from .constants import BELL_VISIBILITY_THRESHOLD
from .errors import FitError, InsufficientDataError, ScenarioError
from .model import (
    CONVENTIONS,
    OutcomeLabel,
    PhaseSetting,
    SpectralParams,
    VisibilityParams,
    bandwidth_from_coherence_length,
    bell_violation_sigma,
    coherence_length_from_bandwidth,
    coincidence_probability,
    envelope,
    joint_outcome_distribution,
    raw_visibility_with_accidentals,
)
from .montecarlo import (
    CountRecord,
    PairBatch,
    TagStream,
    coincidence_histogram,
    count_in_window,
    detect,
    emit_pairs,
    measure_accidentals,
    paired_differences,
    propagate,
    route_at_coupler,
    run_scan,
    sample_paths_and_ports,
    simulate_point,
    windowed_coincidences,
)
from .scenario import (
    CalibrationBlock,
    DetectorParams,
    ElectronicsParams,
    FiberChannel,
    InterferometerParams,
    Scenario,
    SourceParams,
    bundled_scenario_path,
    dumps,
    load_scenario,
    loads,
    save_scenario,
)

__version__ = "0.1.0"
