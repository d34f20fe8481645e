"""Sublinear-time exponential mechanism for MWEM-style private optimization."""

from .sampling import (
    MaterializedScores,
    InnerProductScores,
    ScoreSource,
    SelectionResult,
    TopKSet,
    gumbel_max_exact,
    lazy_gumbel,
    lazy_gumbel_private,
    lazy_gumbel_runtime,
    sample_binomial,
    sample_distinct_complement,
    sample_gumbel,
    sample_truncated_gumbel,
)
from .mips import IndexConfig, TopKResult, build_index, load_index, measure_slack, mips_to_knn, save_index
from .mechanism import (
    AugmentedQuerySet,
    EmConfig,
    PrivacyBudget,
    augment_complements,
    compose_budget,
    em_exact,
    lazy_em,
)
from .mwem import Histogram, MwemParams, build_histogram, fast_mwem, max_error, mwem_classic
from .lpsolve import (
    DenseDistribution,
    FeasibilityReport,
    LPInstance,
    bregman_project,
    bregman_sensitivity_check,
    dense_mwu_solve,
    dual_oracle_em,
    feasibility_binary_search,
    load_lp_instance,
    save_lp_instance,
    scalar_private_solve,
)

__version__ = "0.1.0"
