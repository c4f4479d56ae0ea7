"""Unsupervised segmentation of multichannel time series with a sticky
nonparametric switching linear dynamical system, fit by mean-field
variational inference."""

from .baseline import GaussianHmmModel, em_fit, viterbi_decode
from .chain import (
    AuxiliaryHMM,
    ModeMarginals,
    compute_lambda_s,
    forward_backward,
    map_sequence,
)
from .errors import ConfigError, ElboDecreaseWarning, NumericalError
from .metrics import contingency, nmi, switch_count
from .model import (
    FitResult,
    Hyperparameters,
    ObservationSet,
    VariationalPosterior,
    init_posterior,
    inverse_rescale,
    rescale_observations,
    validate_config,
)
from .smoother import (
    AuxiliaryLDS,
    SmoothedMoments,
    compute_lambda_x,
    rts_smooth,
    sufficient_stats,
)
from .sticks import (
    StickExpectations,
    expected_transition_matrix,
    stick_expectations,
    update_concentrations,
    update_phi,
    update_sticks,
    update_transitions,
)
from .synth import SynthSpec, generate_spec, sample_slds
from .vbem import (
    FitOptions,
    compute_elbo,
    fit,
    update_mode_parameters,
    vbem_iterate,
)

__version__ = "0.1.0"

__all__ = [
    "AuxiliaryHMM",
    "AuxiliaryLDS",
    "ConfigError",
    "ElboDecreaseWarning",
    "FitOptions",
    "FitResult",
    "GaussianHmmModel",
    "Hyperparameters",
    "ModeMarginals",
    "NumericalError",
    "ObservationSet",
    "SmoothedMoments",
    "StickExpectations",
    "SynthSpec",
    "VariationalPosterior",
    "compute_elbo",
    "compute_lambda_s",
    "compute_lambda_x",
    "contingency",
    "em_fit",
    "expected_transition_matrix",
    "fit",
    "forward_backward",
    "generate_spec",
    "init_posterior",
    "inverse_rescale",
    "map_sequence",
    "nmi",
    "rescale_observations",
    "rts_smooth",
    "sample_slds",
    "stick_expectations",
    "sufficient_stats",
    "switch_count",
    "update_concentrations",
    "update_mode_parameters",
    "update_phi",
    "update_sticks",
    "update_transitions",
    "validate_config",
    "viterbi_decode",
]
