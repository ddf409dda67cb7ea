"""pairsift: photon-pair source simulation and time-tag analysis.

Simulates a pulsed or CW photon-pair source contaminated by thermal
(photoluminescent) background, and recovers pair purity, heralding
efficiency and correlation statistics from the resulting time-tag streams
via time-gated distillation.
"""

from .stats import (
    MixtureParams,
    ModePopulation,
    g2_approx,
    g2_theory,
    p_rigorous,
    p_simple,
    pair_probability,
    purity_from_p,
    q_pl,
    q_spdc,
    q_total,
)
from .stream import Channel, Origin, TagStream, read_stream, write_stream
from .simulate import (
    EmissionConfig,
    default_cw_config,
    default_pulsed_config,
    merge_streams,
    simulate,
    simulate_cw,
    simulate_pulsed,
    split_truth,
)
from .histograms import (
    GateWindow,
    Histogram1D,
    Histogram2D,
    apply_gate,
    coincidence_histogram,
    find_gate,
    sync_histogram,
    threefold_histogram,
)
from .estimators import (
    AnalysisReport,
    CwCountingSummary,
    Measurement,
    PulsedCountingSummary,
    alpha_from_eta,
    eta_cw,
    eta_pulsed,
    full_report,
    g2_cw,
    g2_pulsed,
    summarize_cw,
    summarize_pulsed,
)
from .polarization import (
    NonlinearTensor,
    PolarizationConfig,
    coherence_length_um,
    default_configs,
    efficiency,
    efficiency_table,
    thickness_sweep,
)
from .spectroscopy import (
    CalibrationFit,
    CalibrationPoint,
    SpectralSummary,
    band_to_thz,
    conjugate_wavelength,
    fedorov_modes,
    fit_calibration,
)

__version__ = "0.1.0"
