"""Exact factorization, verification, and scoring for discrete graphical models.

The package decomposes positive categorical distributions into univariate
conditional terms and generalized odds-ratio interaction terms anchored at
reference levels, factorizes them against the cliques of undirected and
conditional graphs, verifies Markov properties on exact tables, builds
essential graphs and Markov equivalence classes for DAGs, and fits the
resulting non-redundant log-linear parameterization by exact-gradient
maximum likelihood.
"""

from . import config
from .chaingraph import (
    ChainFactorization,
    EquivalenceClass,
    ScoreResult,
    cg_lc_factorize,
    class_coherent_score,
    dag_loglik,
    enumerate_equivalence_class,
    essential_graph,
)
from .config import CapExceededError
from .decomp import (
    ChenDecomposition,
    FactorTerm,
    LCFactorization,
    chen_decompose,
    compose_from_terms,
    generalized_odds_ratio,
    h_term,
    lauritzen_decompose,
    lc_factorize,
    phi_extension_ratio,
    phi_log_table,
    phi_term,
    reconstruct_conditional,
    reconstruct_marginal,
    reference_conditional_from_marginal,
    verify_restrictions,
)
from .fitscore import (
    FitResult,
    ModelParams,
    fit_mle,
    loglik_and_gradient,
    param_count,
    params_from_distribution,
    params_to_distribution,
    transformed_linear_phi,
    zero_params,
)
from .graphs import (
    CliqueSet,
    Graph,
    GraphError,
    GraphFormatError,
    Vertex,
    format_graph,
    load_graph,
    parse_graph,
    save_graph,
)
from .markov import (
    MarkovReport,
    global_markov_holds,
    hammersley_clifford_check,
    pairwise_markov_holds,
)
from .tabular import (
    DistributionError,
    DistributionFormatError,
    ReferenceAssignment,
    SampleSet,
    TabularDistribution,
    format_distribution,
    format_samples,
    load_distribution,
    load_samples,
    parse_distribution,
    parse_samples,
    random_positive,
    save_distribution,
    save_samples,
)

__version__ = "0.1.0"
