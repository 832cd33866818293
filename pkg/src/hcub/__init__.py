"""Hierarchical contextual uplift bandit: bootstrap uplift estimates on a
context tree, reward inheritance, Bayesian-UCB arm selection, and a
synthetic simulator for regret experiments."""

from .core import (
    ActionVector,
    BucketLevel,
    Context,
    MetricVector,
    RewardWeights,
    action_index,
    baseline_action,
    baseline_index,
    enumerate_actions,
    weighted_combine,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    FeedbackError,
    HCUBError,
    InvalidArgumentError,
    InvalidObservationError,
    LogFormatError,
    UnknownContextError,
)
from .policy import (
    Decision,
    PolicyConfig,
    PolicyState,
    UcbScore,
    exploration_term,
    run_round,
    select_action,
)
from .simulator import (
    AblationReport,
    Environment,
    EnvironmentSpec,
    SimulationResult,
    ablation_compare,
    build_environment,
    oracle_action,
    run_simulation,
    sample_context,
    sample_metrics,
)
from .tree import ROOT, ContextTree, LevelRole, NodeId, TreeSchema, build_tree
from .uplift import (
    ChildWeight,
    EstimateSource,
    EstimateTable,
    EstimatorConfig,
    Observation,
    ObservationStore,
    UpliftEstimate,
    aggregate_children,
    bootstrap_uplift,
    child_weights,
    compute_leaf_estimates,
    compute_tree_estimates,
    is_significant,
    propagate_inheritance,
    record_observation,
)

__version__ = "0.1.0"
