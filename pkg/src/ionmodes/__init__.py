"""Motional-mode analysis of trapped ions.

Forward models and fits for two complementary mode-characterization
methods: electric tickle excitation read out through Doppler-modulated
fluorescence (weak binding), and carrier/sideband Rabi flopping of a
ground-state-cooled ion (strong binding). Both recover mode orientations
and, together with the mode frequencies, the local curvature tensor of
the trapping potential.
"""

from .constants import angular_to_khz, angular_to_mhz, khz_to_angular, mhz_to_angular
from .errors import DegeneracyError, DomainError
from .geometry import (
    CurvatureTensor,
    IonSpecies,
    ModeConfiguration,
    curvature_hessian,
    curvature_systematics,
    mode_vectors,
    rotation_matrix,
)
from .fields import (
    ElectrodeGeometry,
    FieldTable,
    Rect,
    TrapLayout,
    TrapSite,
    demo_layout,
    electrode_field,
    field_table_from_json,
    layout_from_json,
    layout_to_json,
    patch_potential,
)
from .specfun import bessel_j, bessel_j_table, laguerre, sqrt_factorial_ratio
from .weak_binding import (
    ExcitationPulse,
    ProbeLaser,
    Spectrum,
    coherent_occupation,
    excitation_amplitude,
    excitation_amplitudes,
    fluorescence,
    weak_spectrum,
)
from .strong_binding import (
    FloppingCurve,
    RamanGeometry,
    SELECTORS,
    SurvivalEvaluator,
    ThermalState,
    flopping_curve,
    lamb_dicke,
    lamb_dicke_all,
    rabi_rate,
    survival_probability,
    thermal_pn,
)
from .datasets import NoiseModel, simulate_strong, simulate_weak
from .inference import (
    FitReport,
    StrongFitContext,
    WeakFitContext,
    fit_strong,
    fit_weak,
    strong_tilt_scan,
    weak_position_scan,
)

__version__ = "0.1.0"

__all__ = [
    "CurvatureTensor", "DegeneracyError", "DomainError",
    "ElectrodeGeometry", "ExcitationPulse", "FieldTable", "FitReport",
    "FloppingCurve", "IonSpecies", "ModeConfiguration", "NoiseModel",
    "ProbeLaser", "RamanGeometry", "Rect", "SELECTORS", "Spectrum",
    "StrongFitContext", "SurvivalEvaluator", "ThermalState", "TrapLayout",
    "TrapSite", "WeakFitContext",
    "angular_to_khz", "angular_to_mhz", "bessel_j", "bessel_j_table",
    "coherent_occupation", "curvature_hessian", "curvature_systematics",
    "demo_layout", "electrode_field", "excitation_amplitude",
    "excitation_amplitudes", "field_table_from_json", "fit_strong", "fit_weak",
    "flopping_curve", "fluorescence", "khz_to_angular", "laguerre",
    "lamb_dicke", "lamb_dicke_all", "layout_from_json", "layout_to_json",
    "mhz_to_angular", "mode_vectors", "patch_potential", "rabi_rate",
    "rotation_matrix", "simulate_strong", "simulate_weak",
    "sqrt_factorial_ratio", "strong_tilt_scan", "survival_probability",
    "thermal_pn", "weak_position_scan", "weak_spectrum",
]
