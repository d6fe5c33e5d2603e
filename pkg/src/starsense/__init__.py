"""Loss-tolerant GHZ distribution over a lossy star network, with
Fisher-information precision limits and Monte-Carlo phase estimation."""

from .distribution import (
    ConditionalState,
    DistributionResult,
    LinkParams,
    SourceParams,
    build_source_state,
    central_interferometer,
    component_weights_closed_form,
    decompose_conditional,
    direct_transmission_success,
    ghz_state,
    normalization_report,
    run_distribution,
    success_prob_closed_form,
    verify_table1,
)
from .errors import (
    ConfigError,
    CutoffExceeded,
    DecompositionFailure,
    FlatLikelihood,
    MissingPattern,
    NotEffectivelyScalar,
    NotNormalized,
    SingularOutcome,
    SpaceMismatch,
    StarsenseError,
    ZeroProbabilityBranch,
    ZeroWeights,
)
from .estimation import (
    AttainabilityReport,
    CombinationEstimate,
    OutcomeCounts,
    PhaseEstimate,
    combine_linear,
    empirical_vs_crb,
    fold_pattern_estimate,
    mle_phase,
    phases_from_patterns,
    sample_outcomes,
)
from .fisher import (
    CrbResult,
    FisherMatrix,
    cfim,
    combination_scalar,
    crb,
    qfi_bound_mixed,
    qfim_phase_encoded,
    qfim_pure,
    scalar_fisher_1d,
)
from .fock import (
    BeamSplitter,
    DensityOperator,
    FockSpace,
    FockState,
    ModeUnitary,
    Povm,
    apply_interferometer,
    beam_splitter_apply,
    fidelity,
    inner_product,
    loss_channel,
    measure_and_condition,
    mode_matrix,
    partial_trace,
    permute_modes,
    tensor_operators,
)
from .sensing import (
    OutcomeModel,
    ScalarOutcomeModel,
    coincidence_distribution,
    displacement_povm,
    outcome_model,
    phase_encode,
    restrict_to_direction,
    sigma_x_povm,
)

__version__ = "0.1.0"
