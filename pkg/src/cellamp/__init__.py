"""Multi-cell sparse activity detection.

Monte Carlo simulation and analytic prediction of AMP-based device
detection under two network architectures: non-cooperative massive MIMO
(interference treated as noise) and cooperative MIMO (interference
recovered, LLRs aggregated centrally, optionally over a quantized
fronthaul).
"""

from .amp import AmpConfig, AmpDivergenceError, MatchedFilterOutput, denoise, run_amp
from .detection import (
    ErrorProfile,
    aggregate,
    equal_error_threshold,
    llr,
    pm_pf_clt,
    pm_pf_coop_analytic,
    pm_pf_massive_analytic,
)
from .experiments import ExperimentSpec, desk_scale_config, run_experiment, sweep
from .geometry import (
    CellLayout,
    FadingDist,
    NetworkConfig,
    build_layout,
    fading_dist,
    sample_users,
    second_moment_out_of_cell,
)
from .quantize import QuantizerSpec, fronthaul_bits, lmax_for_user, quantize_value
from .signal_model import (
    ScenarioInstance,
    effective_noise_variance_tin,
    generate_signatures,
    synthesize,
)
from .state_evolution import (
    StateEvolutionTrace,
    phi_m,
    psi,
    se_fixed_point_coop,
    se_fixed_point_tin,
    se_partial_recovery,
)

__version__ = "0.1.0"

__all__ = [
    "AmpConfig",
    "AmpDivergenceError",
    "CellLayout",
    "ErrorProfile",
    "ExperimentSpec",
    "FadingDist",
    "MatchedFilterOutput",
    "NetworkConfig",
    "QuantizerSpec",
    "ScenarioInstance",
    "StateEvolutionTrace",
    "aggregate",
    "build_layout",
    "denoise",
    "desk_scale_config",
    "effective_noise_variance_tin",
    "equal_error_threshold",
    "fading_dist",
    "fronthaul_bits",
    "generate_signatures",
    "llr",
    "lmax_for_user",
    "phi_m",
    "pm_pf_clt",
    "pm_pf_coop_analytic",
    "pm_pf_massive_analytic",
    "psi",
    "quantize_value",
    "run_amp",
    "run_experiment",
    "sample_users",
    "se_fixed_point_coop",
    "se_fixed_point_tin",
    "se_partial_recovery",
    "second_moment_out_of_cell",
    "synthesize",
    "sweep",
]
