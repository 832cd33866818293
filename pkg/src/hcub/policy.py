"""Bayesian-UCB arm selection at a leaf and the per-round learning loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    ActionVector,
    Context,
    MetricVector,
    RewardWeights,
    action_count,
    baseline_index,
)
from .errors import ConsistencyError, FeedbackError, InvalidArgumentError
from .tree import ContextTree, NodeId, TreeSchema, build_tree
from .uplift import (
    BootstrapCache,
    EstimateSource,
    EstimateTable,
    EstimatorConfig,
    NodeEstimates,
    Observation,
    ObservationStore,
    UpliftEstimate,
    compute_tree_estimates,
    record_observation,
)

FeedbackProvider = Callable[[Context, ActionVector], "MetricVector | Sequence[float]"]


@dataclass(frozen=True)
class PolicyConfig:
    exploration_coefficient: float = 1.0
    optimistic_init: float = 1.0e3
    refresh_interval: int = 100
    inheritance_enabled: bool = True

    def __post_init__(self) -> None:
        c = self.exploration_coefficient
        if not math.isfinite(c) or c < 0:
            raise InvalidArgumentError(f"exploration_coefficient must be finite and >= 0, got {c}")
        if not math.isfinite(self.optimistic_init) or self.optimistic_init <= 0:
            raise InvalidArgumentError(f"optimistic_init must be finite and > 0, got {self.optimistic_init}")
        if self.refresh_interval < 1:
            raise InvalidArgumentError(f"refresh_interval must be >= 1, got {self.refresh_interval}")


@dataclass(frozen=True)
class UcbScore:
    action_index: int
    exploitation: float
    exploration: float
    total: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "total", self.exploitation + self.exploration)


@dataclass(frozen=True)
class Decision:
    """One line of the decision log. ``source`` is None for the baseline arm."""

    t: int
    leaf: NodeId
    action_index: int
    score: UcbScore
    source: EstimateSource | None

    def record(self) -> dict:
        return {
            "t": self.t,
            "context_path": "/".join(self.leaf),
            "action_index": self.action_index,
            "total": self.score.total,
            "exploitation": self.score.exploitation,
            "exploration": self.score.exploration,
            "source": "baseline" if self.source is None else str(self.source),
        }


def exploration_term(estimate: UpliftEstimate, config: PolicyConfig) -> float:
    """Upper spread of the bootstrap distribution, or the cold-start bonus."""
    if estimate.source is EstimateSource.UNAVAILABLE:
        return config.optimistic_init
    return config.exploration_coefficient * (estimate.ci_upper - estimate.median)


def estimates_for_leaf(table: EstimateTable, leaf: NodeId, inheritance_enabled: bool) -> NodeEstimates:
    """Estimates to act on at ``leaf``, even if it appeared after the last refresh.

    An unseen leaf has no data of its own; with inheritance it takes the
    nearest ancestor's resolved estimates, otherwise everything is unavailable.
    """
    if leaf in table:
        return table[leaf]
    n = table.actions.size
    if inheritance_enabled:
        for depth in range(len(leaf) - 1, -1, -1):
            if leaf[:depth] in table:
                est = table[leaf[:depth]].copy()
                est.source[est.source == EstimateSource.COMPUTED] = EstimateSource.INHERITED
                return est
    return NodeEstimates.empty(n)


def score_arrays(
    estimates: NodeEstimates,
    config: PolicyConfig,
    bucket_count: int,
    pulls: np.ndarray | None = None,
    min_samples: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exploitation and exploration per arm, baseline included, by action index.

    The baseline scores exactly 0 unless the leaf is still short of baseline
    samples (``pulls[baseline] < min_samples``) while some arm is unavailable:
    then it gets the cold-start bonus too, since no uplift can be computed at
    the leaf until the baseline has been served.
    """
    base = baseline_index(bucket_count)
    unavailable = estimates.source == EstimateSource.UNAVAILABLE
    with np.errstate(invalid="ignore"):
        exploit = np.where(unavailable, 0.0, estimates.median)
        explore = np.where(
            unavailable,
            config.optimistic_init,
            config.exploration_coefficient * (estimates.ci_upper - estimates.median),
        )
    base_explore = 0.0
    if pulls is not None and min_samples is not None and pulls[base] < min_samples and unavailable.any():
        base_explore = config.optimistic_init
    return (
        np.concatenate((exploit[:base], [0.0], exploit[base:])),
        np.concatenate((explore[:base], [base_explore], explore[base:])),
    )


def score_actions(
    estimates: NodeEstimates,
    config: PolicyConfig,
    bucket_count: int,
    pulls: np.ndarray | None = None,
    min_samples: int | None = None,
) -> list[UcbScore]:
    exploit, explore = score_arrays(estimates, config, bucket_count, pulls, min_samples)
    return [UcbScore(a, float(x), float(y)) for a, (x, y) in enumerate(zip(exploit, explore))]


def argmax_action(totals: Sequence[float], baseline: int, pulls: Sequence[int] | None = None) -> int:
    """Highest total; the baseline wins a tie at 0, other ties go to the
    least-pulled arm, then the lowest index."""
    totals = np.asarray(totals, dtype=float)
    if np.isnan(totals).any():
        raise ConsistencyError("NaN in UCB scores")
    best = totals.max()
    tied = np.flatnonzero(totals == best)
    if best == 0 and baseline in tied:
        return baseline
    if pulls is None or tied.size == 1:
        return int(tied[0])
    pulls = np.asarray(pulls)
    return int(tied[np.argmin(pulls[tied])])


def select_action(
    leaf: NodeId,
    table: EstimateTable,
    config: PolicyConfig,
    pulls: np.ndarray | None = None,
    min_samples: int | None = None,
) -> ActionVector:
    """Arg-max UCB arm at ``leaf`` of a resolved table."""
    if leaf not in table:
        raise ConsistencyError(f"resolved table has no entry for leaf {leaf!r}")
    scores = score_actions(table[leaf], config, table.bucket_count, pulls, min_samples)
    best = argmax_action([s.total for s in scores], table.baseline, pulls)
    return ActionVector.from_index(best, table.bucket_count)


@dataclass
class PolicyState:
    """Everything one learning run carries between rounds."""

    tree: ContextTree
    store: ObservationStore
    estimator: EstimatorConfig
    policy: PolicyConfig
    weights: RewardWeights
    table: EstimateTable | None = None
    t: int = 0
    decisions: list[Decision] = field(default_factory=list)
    cache: BootstrapCache | None = None

    @classmethod
    def create(
        cls,
        schema: TreeSchema,
        bucket_count: int,
        estimator: EstimatorConfig | None = None,
        policy: PolicyConfig | None = None,
        weights: RewardWeights | None = None,
    ) -> "PolicyState":
        estimator = estimator or EstimatorConfig()
        return cls(
            tree=build_tree(schema, bucket_count),
            store=ObservationStore(),
            estimator=estimator,
            policy=policy or PolicyConfig(),
            weights=weights or RewardWeights(),
            cache=BootstrapCache(estimator),
        )

    @property
    def bucket_count(self) -> int:
        return self.tree.bucket_count

    def refresh(self) -> EstimateTable:
        return compute_tree_estimates(
            self.store, self.tree, self.estimator, self.policy.inheritance_enabled, self.cache
        )

    def decide(self, context: Context, table: EstimateTable | None = None) -> Decision:
        """Pick an arm for ``context`` without touching the state."""
        table = table if table is not None else self.table
        if table is None:
            raise ConsistencyError("no estimate table; call refresh() first")
        leaf = self.tree.leaf_of(context)
        pulls = self.tree.counts(leaf) if leaf in self.tree else np.zeros(action_count(self.bucket_count), dtype=np.int64)
        estimates = estimates_for_leaf(table, leaf, self.policy.inheritance_enabled)
        exploit, explore = score_arrays(
            estimates, self.policy, self.bucket_count, pulls, self.estimator.min_samples_per_group
        )
        best = argmax_action(exploit + explore, table.baseline, pulls)
        if best == table.baseline:
            source = None
        else:
            source = EstimateSource(int(estimates.source[table.column(best)]))
        score = UcbScore(best, float(exploit[best]), float(explore[best]))
        return Decision(self.t, leaf, best, score, source)


def run_round(
    state: PolicyState, context: Context, feedback_provider: FeedbackProvider
) -> tuple[ActionVector, PolicyState]:
    """Play one round: refresh on schedule, choose, observe, record.

    If ``feedback_provider`` raises, the state is left exactly as it was and
    a ``FeedbackError`` is raised.
    """
    state.tree.schema.check_context(context)
    table = state.table
    if table is None or state.t % state.policy.refresh_interval == 0:
        table = state.refresh()
    decision = state.decide(context, table)
    action = ActionVector.from_index(decision.action_index, state.bucket_count)
    try:
        metrics = feedback_provider(context, action)
    except Exception as exc:
        raise FeedbackError(f"feedback failed at round {state.t}: {exc}") from exc
    obs = Observation(context, action, metrics, state.t)
    record_observation(state.store, state.tree, obs, state.weights)
    state.table = table
    state.decisions.append(decision)
    state.t += 1
    return action, state
