"""Multi-domain network slice partitioning toolkit.

Assigns each VNF of a slice's forwarding DAG to one domain of an ordered
chain, minimizing standardized compute, intra-link, and inter-link costs plus
a KL-divergence load-balance term. Ships an exhaustive oracle, a
branch-and-bound solver, a Taylor-linearized approximate integer program, an
unsupervised GNN partitioner, and a benchmark harness.
"""

from .ailp import LinearizedProblem, TaylorParams, linearize, solve_ailp, taylor_xlogx
from .bnb import BnbConfig, BnbResult, BnbStats, lower_bound, solve_bnb
from .costs import (
    CostContext,
    FeasibilityReport,
    NormalizationBounds,
    ObjectiveValue,
    ObjectiveWeights,
    RawCosts,
    check_feasibility,
    entropy,
    inter_cost_matrix,
    kl_divergence,
    load_ratios,
    normalization_bounds,
    objective,
    raw_costs,
)
from .gnn import (
    GnnModel,
    TrainConfig,
    TrainHistory,
    backward,
    calibrate_staircase_cuts,
    forward,
    infer_with_repair,
    load_model,
    loss_relaxed,
    mass_coordinate,
    save_model,
    train,
)
from .graphs import (
    Assignment,
    AssignmentMask,
    DeploymentState,
    Domain,
    DomainChain,
    GraphReport,
    InfeasibleMaskError,
    VnfEdge,
    VnfFg,
    VnfNode,
    default_chain,
    domain_caps,
    generate_random_dag,
    graph_from_json,
    graph_to_json,
    load_chain,
    load_graph,
    save_chain,
    save_graph,
    topological_order,
    validate,
)
from .harness import (
    ComparisonReport,
    CorpusSpec,
    build_corpus,
    load_corpus,
    run_ablations,
    run_comparison,
    sample_kl_distribution,
    sweep_hyperparams,
)
from .oracle import OracleResult, solve_exact

__version__ = "0.1.0"
