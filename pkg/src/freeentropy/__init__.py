"""Desk-scale numerics for the free entropy inequality chi <= chi*."""

__version__ = "0.1.0"

from .ncpoly import NCPoly, TensorPoly, Letter, X, Y, S, free_diff, evaluate, evaluate_tensor, parse_poly, format_poly
from .lawkit import (
    SpectralLaw,
    TraceOracle,
    free_product,
    free_semicircular_extend,
    heat_flow_law,
    law_oracle,
    load_law,
    matrix_trace_oracle,
    quantile_microstate,
)
from .fisher import BasisSpec, PhiStarEstimate, DegenerateGramError, gram_matrix, divergence_functional, phi_star_lower
from .chistar import ChiStarReport, FlowGrid, chi_star_upper, entropy_constant
from .rmt import (
    GaussianEnsemble,
    GueSpec,
    entropy_mc,
    fisher_mc,
    freeness_deviation_table,
    gaussian_entropy_exact,
    gaussian_fisher_exact,
    heat_flow_identity_check,
    ibp_check,
    opnorm_stat,
    sample_gue,
)
from .harness import ExperimentConfig, builtin_config, microstates_entropy_lower_bound, run_inequality_experiment
