"""1-bit matrix completion with tempered posteriors.

Logistic observation model, two prior families (hierarchical low-rank
factorization and spectral scaled Student), exact MALA / Gibbs samplers,
closed-form divergence and rate calculators, and an experiment harness that
checks the concentration statements empirically.
"""

from .bounds import (
    BoundCheckResult,
    check_concentration,
    concentration_threshold,
    default_gamma_scale,
    factor_kl_offset,
    factor_prior_kl_bound,
    factor_rate,
    student_prior_kl_bound,
    student_rate,
)
from .config import ExperimentConfig, load_config
from .estimators import FactorMatrixCompletion, StudentMatrixCompletion
from .harness import (
    AliasSampler,
    RunResult,
    emit_report,
    fit_log_log_slope,
    generate_pi,
    generate_truth,
    run_replicated,
    run_single,
    run_sweep,
    sample_observations,
)
from .metrics import (
    TransferConstants,
    bernoulli_hellinger_sq,
    bernoulli_kl,
    bernoulli_renyi,
    frobenius_error,
    hellinger_bound_constant,
    joint_divergence,
    logistic_curvature_constant,
    normalized_sq_error,
    sup_error,
)
from .model import (
    ObservationSet,
    SamplingDistribution,
    frac_log_likelihood,
    frac_log_likelihood_grad,
    likelihood_of_label,
    log_likelihood,
    log_logistic,
    logistic,
    read_matrix,
    read_observations,
    read_sampling_distribution,
    write_matrix,
    write_observations,
    write_sampling_distribution,
)
from .priors import (
    GAMMA,
    INVERSE_GAMMA,
    FactorPriorConfig,
    FactorState,
    LowRankTruth,
    build_truth,
    factor_log_prior,
    factor_log_prior_grad,
    gamma_conditional_draw,
    sample_factor_state,
    sample_student_prior,
    student_log_prior,
    student_log_prior_grad,
)
from .samplers import (
    Chain,
    MalaConfig,
    PosteriorSummary,
    batch_means_mcse,
    dump_chain,
    mala_step,
    posterior_functional,
    posterior_mean,
    run_factor_chain,
    run_student_chain,
)

__version__ = "0.1.0"
