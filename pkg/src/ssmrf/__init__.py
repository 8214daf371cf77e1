"""Bayesian structure learning for pairwise binary Markov random fields."""

from ssmrf.baseline import NodewiseFit, combine, fit_nodewise
from ssmrf.datagen import (
    GroundTruth,
    gen_block,
    gen_lattice,
    read_dataset,
    read_ground_truth,
    sample_exact_enum,
    sample_exact_lattice,
    write_dataset,
    write_ground_truth,
)
from ssmrf.eval import (
    PosteriorSummary,
    autocorr,
    cll_bayes,
    cll_point,
    f1_at,
    summarize,
)
from ssmrf.gibbs import ChainBank, MomentEstimates, estimate_moments, gibbs_sweep
from ssmrf.hyper import HyperPriors, sample_p0, sample_sigma0
from ssmrf.langevin import (
    LmcConfig,
    LmcState,
    accumulate_preconditioner,
    exact_log_posterior,
    gradient_estimate,
    lmc_step,
    lmc_step_exact,
    realign_momentum,
)
from ssmrf.mrf_core import (
    Dataset,
    ExactTable,
    GroupQuery,
    ModelSpec,
    Moments,
    ParamState,
    conditional_log_likelihood,
    conditional_log_likelihood_rows,
    enumerate_sample,
    enumerate_states,
    exact_log_partition,
    exact_moments,
    exact_state_probs,
    ising_to_boltzmann,
    log_unnormalized,
    transfer_matrix_log_partition,
    transfer_matrix_sample,
)
from ssmrf.rjmcmc import (
    ProposalCoeffs,
    compute_jump_widths,
    exact_sweep,
    parallel_sweep,
    proposal_coeffs,
    r_tilde,
    sample_truncated_gaussian,
    slab_logpdf,
    truncated_logpdf,
)
from ssmrf.sampler import PosteriorSample, RunConfig, run, run_exact

__version__ = "0.1.0"
