"""GCD graphs: quality calculus, structural steps and the density-increment iteration."""

from .constants import ConstantProfile, make_profile, paper_profile, toy_profile
from .graph import (
    ClassTally,
    ExactQuality,
    GcdGraph,
    Measure,
    QualityReport,
    RatioCheck,
    RSplit,
    R_set,
    class_tally,
    density,
    exact_quality,
    from_text,
    induced_subgraph,
    log_quality,
    new_graph,
    quality,
    quality_ratio_identity_check,
    r_split,
    subgraph,
    to_text,
    violations,
)
from .instances import bilinear_graph, diagonal_graph, random_graph, random_partition
from .iteration import (
    DichotomyResult,
    IterationTrace,
    PruneResult,
    ReduceResult,
    TraceStep,
    cosmetic_prune_L,
    cosmetic_prune_omega,
    iteration_step1,
    iteration_step2,
    main_dichotomy,
    reduce_to_empty_R,
    small_iteration,
    small_primes_pipeline,
)
from .lemmas import (
    degree_violations,
    edge_mass_dichotomy,
    edge_sets_witness,
    find_small_set_violation,
    high_degree_refine,
    is_operationally_maximal,
    maximalize,
    no_small_set_edges,
    pigeonhole_select,
    unbalanced_edges,
)
from .suites import SUITES, SuiteRow, run_suite
