"""Compound Poisson limits for triangular arrays of Markov-chain functionals,
their Lévy-distance rate, and Bayes threshold estimation in TAR models."""

from .distributions import CompoundPoissonLaw, InnovationDensity, JumpLaw, cp_char_fn, poisson_cdf, sample_compound_poisson
from .markov import ARModel, Drift, TARModel, mixing_diagnostic, simulate_chain, simulate_paths, solve_invariant_density
from .metrics import (
    EmpiricalLaw,
    empirical_cf,
    kolmogorov_distance,
    levy_distance,
    rate_study,
    theoretical_rate_bound,
    zolotarev_bound,
)
from .threshold import (
    bayes_estimate,
    estimator_asymptotics_study,
    limit_estimator_draw,
    log_likelihood,
    log_Zn,
    sample_limit_process,
)
from .triangular import Window, audit_assumptions, build_row

__version__ = "0.1.0"
