"""Backward-channel formulation of lossy source coding.

Single-letter compression rates for the classical, side-information, and
quantum-classical settings, feasibility-set machinery over probability
simplices, the rate-distortion bridge, and a finite-blocklength simulator of
the random-coding protocol.
"""

from .errors import (
    BudgetExceededError,
    ConvergenceError,
    InfeasibleError,
    RateChannelError,
    ValidationError,
)
from .feasible import (
    LinearFeasibility,
    ProjectionResult,
    classical_feasibility,
    project_to_feasible,
    pseudoinverse,
    quantum_feasibility,
)
from .prob import (
    Channel,
    JointPmf,
    Pmf,
    Posterior,
    PrunedProduct,
    TypicalityParams,
    bayes_posterior,
    conditional_mutual_information,
    entropy,
    is_jointly_typical,
    is_typical,
    mutual_information,
    pruned_product,
    total_variation,
)
from .quantum import (
    CqChannel,
    DensityOperator,
    PureState,
    SubsystemLayout,
    average_state,
    canonical_purification,
    cq_state,
    hermitian_eig,
    partial_trace,
    quantum_cmi,
    trace_norm,
    von_neumann_entropy,
)
from .rates import (
    DistortionSpec,
    LpResult,
    RateResult,
    blahut_arimoto,
    distortion_from_channel,
    distortion_matrix,
    lp_solve,
    purified_target,
    qc_rate,
    rate_channel,
    rd_bridge,
)
from .simulate import (
    BinningMap,
    Codebook,
    DiagnosticResult,
    ProtocolSetup,
    TrialRecord,
    build_binning,
    build_codebook,
    decode,
    empirical_distortion,
    encoder_pmf,
    exact_block_tv,
    run_trial,
    run_trials,
    single_letter_diagnostic,
)
from .wyner_ziv import (
    WzCandidate,
    WzResult,
    WzSetup,
    induced_joint,
    posterior_residual,
    rate_objective,
    solve_inner_bound,
)

__version__ = "0.1.0"
