"""Simulation toolkit for first-step constraint error and branch recall in
constrained generative retrieval."""

from .analysis import (
    TrialReport,
    branch_lyapunov_ratios,
    joint_entropy,
    kl,
    lyapunov_ratio,
    mass_unbiasedness_check,
    monte_carlo_kl,
    step_entropy_profile,
    tv,
)
from .beam import (
    BranchValuation,
    RankMetrics,
    branch_values_max,
    branch_values_sum,
    nonrelevant_score_moments,
    rank_and_score,
    spike_experiment,
    summarize_rows,
)
from .bounds import (
    evaluate,
    kl_bound_general,
    kl_bound_uniform,
    min_vocab_size,
    recall_bound_is_vacuous,
    recall_upper_bound,
)
from .corpus import (
    ConstrainedFirstStep,
    CorpusGeometry,
    SamplingSpec,
    sample_first_step_binomial,
    sample_first_step_exact,
    sample_first_step_grouped,
    sample_first_step_normal,
)
from .decoder import MarginalPair, apply_constraint, marginal_pair, predicted_marginal, truth_marginal
from .errors import (
    AbsoluteContinuityError,
    EmptyCorpusError,
    EmptySupportError,
    FeasibilityError,
    GRLimitsError,
    LyapunovError,
)
from .ingest import DocidMapping, branch_metrics, hash_mapping, load_mapping, parse_run_file, write_run_file
from .relevance import (
    BranchWeights,
    SpikeModel,
    avg_simpson,
    exponential_tier_model,
    runfile_model,
    simpson_index,
    spike_model,
    uniform_model,
)

__version__ = "0.1.0"
