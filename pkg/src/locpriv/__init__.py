"""Per-individual privacy loss of distributed spatio-temporal count releases.

An adversary who knows a target's Markov location prior and everyone else's
whereabouts watches released sensor counts and tries to reconstruct the
target's trajectory to within ``s`` wrong steps.  This package estimates
that success probability by Monte Carlo for concrete attacks and bounds it
for every attack with Fano-type inequalities.
"""

from .bounds import (
    BoundReport,
    FanoInputs,
    SubsetMarginalTable,
    ball_prob_bound,
    bound_report,
    hamming_ball_logsize,
    loose_fano_bound,
    max_subset_marginal,
    mi_bound_gaussian,
    mi_bound_raw,
    tight_fano_bound,
)
from .estimators import (
    Estimate,
    constant_estimate,
    constant_success_exact,
    map_estimate,
    prior_estimate,
)
from .ingest import (
    CheckinRecord,
    Discretization,
    DiscretizedUser,
    discretize,
    fit_transition,
    parse_checkins,
    split_train_eval,
)
from .markov import (
    MarkovPrior,
    PowerCache,
    matrix_powers,
    prior_entropy,
    sample_trajectory,
    spectral_gap,
    stationary_distribution,
    synthetic_prior,
    validate_prior,
)
from .mechanism import Mechanism, Scenario, dp_epsilon, emission_logprob, observe, random_schedule
from .montecarlo import LossEstimate, SweepRow, SweepSpec, attack, estimate_loss, estimate_loss_constant_max, sweep

__version__ = "0.1.0"
