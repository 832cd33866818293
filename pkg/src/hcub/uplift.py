"""Bootstrap uplift estimation, bottom-up aggregation and reward inheritance.

Rewards are scalarized per observation with the reward weights, then for
every (leaf, arm) pair the uplift over the all-Medium baseline arm is
bootstrapped from the leaf's own samples. Internal nodes combine their
children's estimates weighted by cohort size, and a top-down pass lets a
node without a significant uplift take over its parent's resolved estimate.

Estimate tables are dense: one array per field, indexed by the non-baseline
arms in ascending action index.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

from .core import (
    ActionVector,
    Context,
    MetricVector,
    RewardWeights,
    action_count,
    baseline_index,
    weighted_combine,
)
from .errors import ConsistencyError, InvalidArgumentError, InvalidObservationError
from .tree import ROOT, ContextTree, NodeId

# resample block size, in drawn indices, to bound memory for large groups
_BLOCK_ELEMENTS = 1 << 21


class EstimateSource(enum.IntEnum):
    UNAVAILABLE = 0
    COMPUTED = 1
    INHERITED = 2

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class UpliftEstimate:
    median: float
    ci_lower: float
    ci_upper: float
    n_treated: int
    n_baseline: int
    source: EstimateSource

    @classmethod
    def unavailable(cls, n_treated: int = 0, n_baseline: int = 0) -> "UpliftEstimate":
        nan = float("nan")
        return cls(nan, nan, nan, int(n_treated), int(n_baseline), EstimateSource.UNAVAILABLE)

    @property
    def available(self) -> bool:
        return self.source is not EstimateSource.UNAVAILABLE


@dataclass(frozen=True)
class EstimatorConfig:
    resample_count: int = 1000
    min_samples_per_group: int = 30
    percentile_low: float = 5.0
    percentile_high: float = 95.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.resample_count < 1:
            raise InvalidArgumentError("resample_count must be >= 1")
        if self.min_samples_per_group < 1:
            raise InvalidArgumentError("min_samples_per_group must be >= 1")
        if not 0 < self.percentile_low < 50 < self.percentile_high < 100:
            raise InvalidArgumentError(
                "need 0 < percentile_low < 50 < percentile_high < 100, got "
                f"{self.percentile_low}, {self.percentile_high}"
            )


@dataclass(frozen=True)
class Observation:
    context: Context
    action: ActionVector
    metrics: MetricVector
    round: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.metrics, MetricVector):
            values = tuple(float(v) for v in self.metrics)
            if len(values) != 3 or not all(math.isfinite(v) for v in values):
                raise InvalidObservationError(f"metrics must be 3 finite values, got {values}")
            object.__setattr__(self, "metrics", MetricVector(*values))
        if self.round < 0:
            raise InvalidObservationError(f"round must be >= 0, got {self.round}")


class ObservationStore:
    """Scalar rewards per (leaf, arm); baseline rewards kept per leaf."""

    def __init__(self) -> None:
        self._treated: dict[tuple[NodeId, int], list[float]] = {}
        self._baseline: dict[NodeId, list[float]] = {}
        self.last_round = -1

    def treated(self, leaf: NodeId, action_index: int) -> np.ndarray:
        return np.asarray(self._treated.get((leaf, action_index), ()), dtype=float)

    def baseline(self, leaf: NodeId) -> np.ndarray:
        return np.asarray(self._baseline.get(leaf, ()), dtype=float)

    def n_treated(self, leaf: NodeId, action_index: int) -> int:
        return len(self._treated.get((leaf, action_index), ()))

    def n_baseline(self, leaf: NodeId) -> int:
        return len(self._baseline.get(leaf, ()))

    def __len__(self) -> int:
        return sum(map(len, self._treated.values())) + sum(map(len, self._baseline.values()))

    def _append(self, leaf: NodeId, action_index: int, is_baseline: bool, reward: float) -> None:
        if is_baseline:
            self._baseline.setdefault(leaf, []).append(reward)
        else:
            self._treated.setdefault((leaf, action_index), []).append(reward)


def record_observation(
    store: ObservationStore, tree: ContextTree, obs: Observation, weights: RewardWeights
) -> ObservationStore:
    """Scalarize ``obs`` and file it under its leaf; counts go up along the path."""
    if obs.action.bucket_count != tree.bucket_count:
        raise InvalidObservationError(
            f"action {obs.action} has {obs.action.bucket_count} buckets, tree expects {tree.bucket_count}"
        )
    if obs.round < store.last_round:
        raise InvalidObservationError(
            f"round {obs.round} precedes already ingested round {store.last_round}"
        )
    reward = weighted_combine(obs.metrics, weights)
    if not math.isfinite(reward):
        raise InvalidObservationError(f"scalar reward is not finite for metrics {obs.metrics}")
    path = tree.resolve_path(obs.context, materialize=True)
    index = obs.action.index
    store._append(path[-1], index, index == baseline_index(tree.bucket_count), reward)
    tree.add_samples(path, index)
    store.last_round = obs.round
    return store


def pair_rng(seed: int, node: NodeId, action_index: int) -> np.random.Generator:
    """Independent stream for one (node, arm) pair, stable across iteration order."""
    key = "\x1f".join(node) + "\x1e" + str(action_index)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng([seed % 2**64, int.from_bytes(digest, "little")])


def _resampled_means(values: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    n = values.size
    block = max(1, _BLOCK_ELEMENTS // n)
    out = np.empty(count)
    for start in range(0, count, block):
        stop = min(count, start + block)
        idx = rng.integers(0, n, size=(stop - start, n), dtype=np.int32)
        out[start:stop] = values[idx].mean(axis=1)
    return out


def bootstrap_uplift(
    treated: Sequence[float],
    baseline: Sequence[float],
    config: EstimatorConfig,
    rng: np.random.Generator | None = None,
) -> UpliftEstimate:
    """Percentile-bootstrap estimate of ``mean(treated) - mean(baseline)``.

    Each resample draws ``len(treated)`` treated and ``len(baseline)``
    baseline rewards with replacement, independently. The reported median and
    interval are percentiles (linear interpolation) of the resampled
    differences. Groups smaller than ``config.min_samples_per_group`` yield an
    unavailable estimate.

    Parameters
    ----------
    treated, baseline : sequence of float
        Scalar rewards under the arm and under the baseline arm.
    config : EstimatorConfig
    rng : numpy.random.Generator, optional
        Defaults to a generator seeded with ``config.rng_seed``.
    """
    t = np.asarray(treated, dtype=float)
    b = np.asarray(baseline, dtype=float)
    if t.size == 0 or b.size == 0:
        raise InvalidArgumentError("bootstrap_uplift needs non-empty treated and baseline samples")
    if min(t.size, b.size) < config.min_samples_per_group:
        return UpliftEstimate.unavailable(t.size, b.size)
    if rng is None:
        rng = np.random.default_rng(config.rng_seed)
    diffs = _resampled_means(t, config.resample_count, rng)
    diffs -= _resampled_means(b, config.resample_count, rng)
    lo, med, hi = np.percentile(diffs, [config.percentile_low, 50.0, config.percentile_high])
    # interpolation can put the endpoints a few ulps past the median
    lo, hi = min(lo, med), max(hi, med)
    return UpliftEstimate(float(med), float(lo), float(hi), t.size, b.size, EstimateSource.COMPUTED)


@dataclass
class NodeEstimates:
    """Dense per-arm estimates for one node (non-baseline arms only)."""

    median: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_treated: np.ndarray
    n_baseline: np.ndarray
    source: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "NodeEstimates":
        nan = np.full(n, np.nan)
        return cls(
            nan,
            nan.copy(),
            nan.copy(),
            np.zeros(n, dtype=np.int64),
            np.zeros(n, dtype=np.int64),
            np.full(n, EstimateSource.UNAVAILABLE, dtype=np.int8),
        )

    def copy(self) -> "NodeEstimates":
        return NodeEstimates(*(a.copy() for a in self._arrays()))

    def _arrays(self) -> tuple[np.ndarray, ...]:
        return (self.median, self.ci_lower, self.ci_upper, self.n_treated, self.n_baseline, self.source)

    def estimate(self, col: int) -> UpliftEstimate:
        return UpliftEstimate(
            float(self.median[col]),
            float(self.ci_lower[col]),
            float(self.ci_upper[col]),
            int(self.n_treated[col]),
            int(self.n_baseline[col]),
            EstimateSource(int(self.source[col])),
        )

    def set(self, col: int, est: UpliftEstimate) -> None:
        self.median[col] = est.median
        self.ci_lower[col] = est.ci_lower
        self.ci_upper[col] = est.ci_upper
        self.n_treated[col] = est.n_treated
        self.n_baseline[col] = est.n_baseline
        self.source[col] = est.source

    def significant(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return (self.source == EstimateSource.COMPUTED) & (
                (self.ci_lower > 0) | (self.ci_upper < 0)
            )

    def same_as(self, other: "NodeEstimates") -> bool:
        return all(
            np.array_equal(a, b, equal_nan=a.dtype.kind == "f")
            for a, b in zip(self._arrays(), other._arrays())
        )


@dataclass
class EstimateTable:
    """Estimates keyed by node, with the arm axis excluding the baseline."""

    bucket_count: int
    nodes: dict[NodeId, NodeEstimates] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.baseline = baseline_index(self.bucket_count)
        self.actions = np.array(
            [a for a in range(action_count(self.bucket_count)) if a != self.baseline], dtype=np.int64
        )

    def column(self, action_index: int) -> int:
        if action_index == self.baseline:
            raise InvalidArgumentError("the baseline arm has no uplift estimate")
        if not 0 <= action_index < action_count(self.bucket_count):
            raise InvalidArgumentError(f"action index {action_index} out of range")
        return action_index if action_index < self.baseline else action_index - 1

    def __contains__(self, node: NodeId) -> bool:
        return node in self.nodes

    def __getitem__(self, node: NodeId) -> NodeEstimates:
        try:
            return self.nodes[node]
        except KeyError:
            raise ConsistencyError(f"no estimates for node {node!r}") from None

    def get(self, node: NodeId, action_index: int) -> UpliftEstimate:
        return self[node].estimate(self.column(action_index))

    def copy(self) -> "EstimateTable":
        return EstimateTable(self.bucket_count, {n: e.copy() for n, e in self.nodes.items()})

    def same_as(self, other: "EstimateTable") -> bool:
        """Bit-for-bit equality (NaN equal to NaN)."""
        return (
            self.bucket_count == other.bucket_count
            and self.nodes.keys() == other.nodes.keys()
            and all(e.same_as(other.nodes[n]) for n, e in self.nodes.items())
        )

    def records(self) -> Iterator[dict]:
        """Flat export rows, one per (node, arm)."""
        for node in sorted(self.nodes, key=lambda n: (len(n), n)):
            est = self.nodes[node]
            for col, action in enumerate(self.actions):
                yield {
                    "node_path": "/".join(node),
                    "action_index": int(action),
                    "median": _json_float(est.median[col]),
                    "ci_lower": _json_float(est.ci_lower[col]),
                    "ci_upper": _json_float(est.ci_upper[col]),
                    "n_treated": int(est.n_treated[col]),
                    "n_baseline": int(est.n_baseline[col]),
                    "source": str(EstimateSource(int(est.source[col]))),
                }


def _json_float(x: float) -> float | None:
    return None if math.isnan(x) else float(x)


class BootstrapCache:
    """Memo of leaf bootstraps keyed by group sizes.

    Reward lists only grow and every pair has a fixed random stream, so the
    pair's sample sizes fully determine the result.
    """

    def __init__(self, config: EstimatorConfig):
        self.config = config
        self._memo: dict[tuple[NodeId, int], tuple[int, int, UpliftEstimate]] = {}
        self.hits = 0
        self.misses = 0

    def estimate(self, store: ObservationStore, leaf: NodeId, action: int) -> UpliftEstimate:
        n_t, n_b = store.n_treated(leaf, action), store.n_baseline(leaf)
        cfg = self.config
        if min(n_t, n_b) < cfg.min_samples_per_group:
            return UpliftEstimate.unavailable(n_t, n_b)
        hit = self._memo.get((leaf, action))
        if hit is not None and hit[:2] == (n_t, n_b):
            self.hits += 1
            return hit[2]
        self.misses += 1
        est = bootstrap_uplift(
            store.treated(leaf, action),
            store.baseline(leaf),
            cfg,
            rng=pair_rng(cfg.rng_seed, leaf, action),
        )
        self._memo[(leaf, action)] = (n_t, n_b, est)
        return est


def compute_leaf_estimates(
    store: ObservationStore,
    tree: ContextTree,
    config: EstimatorConfig,
    cache: BootstrapCache | None = None,
) -> EstimateTable:
    """Bootstrap every (leaf, non-baseline arm) pair of ``tree``."""
    if cache is None or cache.config != config:
        cache = BootstrapCache(config)
    table = EstimateTable(tree.bucket_count)
    for leaf in tree.leaves():
        est = NodeEstimates.empty(table.actions.size)
        for col, action in enumerate(table.actions):
            est.set(col, cache.estimate(store, leaf, int(action)))
        table.nodes[leaf] = est
    return table


@dataclass(frozen=True)
class ChildWeight:
    node: NodeId
    weight: float


def child_weights(tree: ContextTree, parent: NodeId, action: int) -> list[ChildWeight]:
    """Cohort-size weights of ``parent``'s children for one arm.

    A child's size is its sample count for ``action`` plus its baseline
    count; all-zero sizes give uniform weights.
    """
    if tree.is_leaf(parent):
        raise InvalidArgumentError(f"node {parent!r} is a leaf")
    children = tree.children(parent)
    if not children:
        return []
    base = baseline_index(tree.bucket_count)
    sizes = np.array([tree.counts(c)[action] + tree.counts(c)[base] for c in children], dtype=float)
    total = sizes.sum()
    weights = sizes / total if total > 0 else np.full(len(children), 1.0 / len(children))
    return [ChildWeight(c, float(w)) for c, w in zip(children, weights)]


def aggregate_children(
    child_estimates: Sequence[UpliftEstimate], weights: Sequence[ChildWeight]
) -> UpliftEstimate:
    """Weighted sum of child medians and CI endpoints over available children."""
    if len(child_estimates) != len(weights):
        raise InvalidArgumentError(
            f"{len(child_estimates)} estimates but {len(weights)} weights"
        )
    pairs = [(e, w.weight) for e, w in zip(child_estimates, weights) if e.available]
    if not pairs:
        return UpliftEstimate.unavailable(
            sum(e.n_treated for e in child_estimates), sum(e.n_baseline for e in child_estimates)
        )
    w = np.array([p[1] for p in pairs])
    w = w / w.sum() if w.sum() > 0 else np.full(len(pairs), 1.0 / len(pairs))
    med = np.array([e.median for e, _ in pairs])
    lo = np.array([e.ci_lower for e, _ in pairs])
    hi = np.array([e.ci_upper for e, _ in pairs])
    return UpliftEstimate(
        float(w @ med),
        float(w @ lo),
        float(w @ hi),
        sum(e.n_treated for e, _ in pairs),
        sum(e.n_baseline for e, _ in pairs),
        EstimateSource.COMPUTED,
    )


def is_significant(estimate: UpliftEstimate) -> bool:
    """Computed and the interval excludes zero; an endpoint at zero does not count."""
    return estimate.source is EstimateSource.COMPUTED and (
        estimate.ci_lower > 0 or estimate.ci_upper < 0
    )


def aggregate_tree(tree: ContextTree, leaf_table: EstimateTable) -> EstimateTable:
    """Fill in every internal node from its children, leaves first.

    Vectorized over arms; matches ``child_weights`` + ``aggregate_children``
    applied per (node, arm).
    """
    table = EstimateTable(tree.bucket_count, {n: e.copy() for n, e in leaf_table.nodes.items()})
    actions, base = table.actions, table.baseline
    n = actions.size
    for node in tree.iter_bottom_up():
        if tree.is_leaf(node):
            if node not in table:
                raise ConsistencyError(f"missing leaf estimates for {node!r}")
            continue
        children = tree.children(node)
        if not children:
            table.nodes[node] = NodeEstimates.empty(n)
            continue
        kids = [table[c] for c in children]
        counts = np.stack([tree.counts(c) for c in children])
        sizes = (counts[:, actions] + counts[:, [base]]).astype(float)
        avail = np.stack([k.source != EstimateSource.UNAVAILABLE for k in kids])
        # child_weights' uniform fallback, then renormalized over available children
        tot = sizes.sum(axis=0)
        w = np.where(tot > 0, sizes / np.where(tot > 0, tot, 1.0), 1.0 / len(children))
        w = w * avail
        wsum = w.sum(axis=0)
        uniform = avail / np.maximum(avail.sum(axis=0), 1)
        w = np.where(wsum > 0, w / np.where(wsum > 0, wsum, 1.0), uniform)
        any_avail = avail.any(axis=0)

        def wsum_of(attr: str) -> np.ndarray:
            vals = np.stack([getattr(k, attr) for k in kids])
            return np.where(any_avail, (w * np.where(avail, vals, 0.0)).sum(axis=0), np.nan)

        def count_of(attr: str) -> np.ndarray:
            vals = np.stack([getattr(k, attr) for k in kids])
            return np.where(any_avail, (vals * avail).sum(axis=0), vals.sum(axis=0))

        table.nodes[node] = NodeEstimates(
            wsum_of("median"),
            wsum_of("ci_lower"),
            wsum_of("ci_upper"),
            count_of("n_treated"),
            count_of("n_baseline"),
            np.where(any_avail, EstimateSource.COMPUTED, EstimateSource.UNAVAILABLE).astype(np.int8),
        )
    return table


def propagate_inheritance(tree: ContextTree, estimates: EstimateTable) -> EstimateTable:
    """Top-down: keep significant own estimates, otherwise take the parent's.

    The root keeps its own estimate. Parents resolve before children, so a
    single sweep walks the chain up to the nearest significant ancestor.
    """
    resolved = EstimateTable(estimates.bucket_count)
    for node in tree.iter_top_down():
        own = estimates[node]
        if node == ROOT:
            resolved.nodes[node] = own.copy()
            continue
        parent = resolved[node[:-1]]
        out = own.copy()
        take = ~own.significant()
        for mine, theirs in zip(out._arrays()[:5], parent._arrays()[:5]):
            mine[take] = theirs[take]
        # an unavailable parent passes on "unavailable", never "inherited"
        out.source[take] = np.where(
            parent.source[take] == EstimateSource.UNAVAILABLE,
            EstimateSource.UNAVAILABLE,
            EstimateSource.INHERITED,
        )
        resolved.nodes[node] = out
    if resolved.nodes.keys() != estimates.nodes.keys():
        raise ConsistencyError("estimate table has nodes that are not in the tree")
    return resolved


def compute_tree_estimates(
    store: ObservationStore,
    tree: ContextTree,
    config: EstimatorConfig,
    inheritance_enabled: bool = True,
    cache: BootstrapCache | None = None,
) -> EstimateTable:
    """Leaf bootstrap, bottom-up aggregation, then (optionally) inheritance.

    With inheritance disabled the leaf entries are exactly the leaf bootstrap
    results; internal nodes are still aggregated for reporting.
    """
    leaves = compute_leaf_estimates(store, tree, config, cache)
    full = aggregate_tree(tree, leaves)
    if inheritance_enabled:
        return propagate_inheritance(tree, full)
    return full


def estimates_from_mapping(
    bucket_count: int, mapping: Mapping[NodeId, Mapping[int, UpliftEstimate]]
) -> EstimateTable:
    """Build a table from ``{node: {action_index: estimate}}``; absent arms are unavailable."""
    table = EstimateTable(bucket_count)
    for node, per_action in mapping.items():
        est = NodeEstimates.empty(table.actions.size)
        for action, e in per_action.items():
            est.set(table.column(action), e)
        table.nodes[tuple(node)] = est
    return table
