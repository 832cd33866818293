"""Synthetic cohort-structured environment, regret accounting, and the
inheritance on/off ablation.

True mean metric vectors are generated per (leaf, arm) as::

    base_mean + cohort offset(leaf)
              + sum over ancestors n of signal(n, arm)
              + perturbation(leaf, arm)

with the baseline arm's signal and perturbation fixed at zero, so a leaf's
true uplift for an arm is the sum of signals shared with its siblings plus a
leaf-specific perturbation. ``signal_sd`` versus ``perturbation_sd`` is the
knob for how much siblings resemble each other.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .core import (
    ActionVector,
    Context,
    MetricVector,
    RewardWeights,
    action_count,
    baseline_index,
    weighted_combine,
)
from .errors import InvalidArgumentError, UnknownContextError
from .policy import PolicyConfig, PolicyState, run_round
from .tree import NodeId, TreeSchema
from .uplift import EstimatorConfig, Observation, record_observation


@dataclass(frozen=True)
class EnvironmentSpec:
    """Recipe for a synthetic environment.

    Parameters
    ----------
    schema : TreeSchema
    vocabularies : tuple of tuple of str
        Feature values per schema level; leaves are their cross product.
    bucket_count : int
    base_mean : (engagement, retention, revenue) baseline means.
    cohort_sd : float
        Spread of per-leaf baseline levels (affects rewards, not uplifts).
    signal_sd : float or tuple of float
        Spread of the per-(internal node, arm) uplift shared by all leaves
        below the node; a tuple gives one value per internal level, root first.
    perturbation_sd : float
        Spread of the leaf-specific part of each uplift.
    noise_sd : per-metric observation noise.
    context_weights : tuple of float, optional
        Unnormalized visit probabilities per leaf (cross-product order).
    context_skew : float
        When ``context_weights`` is None, leaf ``k`` in a seeded random order
        gets weight ``(k + 1) ** -context_skew``; 0 means uniform.
    true_means : array (leaves, arms, 3), optional
        Explicit means; bypasses the generator.
    shift_round : int, optional
        Round at which all true means are redrawn.
    seed : int
    """

    schema: TreeSchema
    vocabularies: tuple[tuple[str, ...], ...]
    bucket_count: int = 2
    base_mean: tuple[float, float, float] = (1.0, 1.0, 1.0)
    cohort_sd: float = 0.0
    signal_sd: float | tuple[float, ...] = 1.0
    perturbation_sd: float = 0.1
    noise_sd: tuple[float, float, float] = (1.0, 1.0, 1.0)
    context_weights: tuple[float, ...] | None = None
    context_skew: float = 0.0
    true_means: np.ndarray | None = field(default=None, compare=False, repr=False)
    shift_round: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        vocab = tuple(tuple(str(v) for v in level) for level in self.vocabularies)
        object.__setattr__(self, "vocabularies", vocab)
        if len(vocab) != self.schema.depth:
            raise InvalidArgumentError(
                f"{len(vocab)} vocabularies for a schema of depth {self.schema.depth}"
            )
        for name, values in zip(self.schema.names, vocab):
            if not values or len(set(values)) != len(values):
                raise InvalidArgumentError(f"vocabulary for {name!r} must be non-empty and unique")
        action_count(self.bucket_count)
        if len(self.base_mean) != 3 or len(self.noise_sd) != 3:
            raise InvalidArgumentError("base_mean and noise_sd need 3 components")
        sds = [self.cohort_sd, self.perturbation_sd, *self.noise_sd, *self._level_signal_sd()]
        if not all(math.isfinite(s) and s >= 0 for s in sds):
            raise InvalidArgumentError("standard deviations must be finite and >= 0")
        n_leaves = math.prod(len(v) for v in vocab)
        if self.context_weights is not None:
            w = np.asarray(self.context_weights, dtype=float)
            if w.shape != (n_leaves,) or (w < 0).any() or not np.isfinite(w).all() or w.sum() <= 0:
                raise InvalidArgumentError(
                    f"context_weights must be {n_leaves} non-negative values with positive sum"
                )
        if not math.isfinite(self.context_skew) or self.context_skew < 0:
            raise InvalidArgumentError("context_skew must be >= 0")
        if self.true_means is not None:
            shape = (n_leaves, action_count(self.bucket_count), 3)
            if np.shape(self.true_means) != shape:
                raise InvalidArgumentError(f"true_means must have shape {shape}")
        if self.shift_round is not None and self.shift_round < 1:
            raise InvalidArgumentError("shift_round must be >= 1")

    def _level_signal_sd(self) -> tuple[float, ...]:
        sd = self.signal_sd
        if isinstance(sd, (int, float)):
            return (float(sd),) * self.schema.depth
        sd = tuple(float(s) for s in sd)
        if len(sd) != self.schema.depth:
            raise InvalidArgumentError(
                f"signal_sd needs one value per internal level ({self.schema.depth})"
            )
        return sd


class Environment:
    """Materialized ground truth: true means per (leaf, arm) and visit weights."""

    def __init__(self, spec: EnvironmentSpec, means: list[np.ndarray], context_p: np.ndarray):
        self.spec = spec
        self.schema = spec.schema
        self.bucket_count = spec.bucket_count
        self.n_actions = action_count(spec.bucket_count)
        self.leaves: list[NodeId] = [tuple(p) for p in itertools.product(*spec.vocabularies)]
        self.leaf_index = {leaf: i for i, leaf in enumerate(self.leaves)}
        self.epochs = means
        self.context_p = context_p
        self._cdf = np.cumsum(context_p)
        self._cdf[-1] = 1.0
        self._noise = np.asarray(spec.noise_sd, dtype=float)
        self._rewards: dict = {}

    def means(self, t: int = 0) -> np.ndarray:
        """True means, shape (leaves, arms, 3), in force at round ``t``."""
        shift = self.spec.shift_round
        return self.epochs[1 if shift is not None and t >= shift else 0]

    def expected_rewards(self, weights: RewardWeights, t: int = 0) -> np.ndarray:
        """Scalar expected reward per (leaf, arm).

        Written out term by term so the floats match ``weighted_combine`` on
        a noise-free observation exactly.
        """
        key = (weights, id(self.means(t)))
        if key not in self._rewards:
            m = self.means(t)
            w1, w2, w3 = weights.as_tuple()
            self._rewards[key] = w1 * m[..., 0] + w2 * m[..., 1] + w3 * m[..., 2]
        return self._rewards[key]

    def true_uplifts(self, weights: RewardWeights, t: int = 0) -> np.ndarray:
        r = self.expected_rewards(weights, t)
        return r - r[:, [baseline_index(self.bucket_count)]]

    def leaf_of(self, context: Context) -> int:
        self.schema.check_context(context)
        try:
            return self.leaf_index[context.values]
        except KeyError:
            raise UnknownContextError(f"context {context} is not a leaf of this environment") from None

    def context(self, leaf: int) -> Context:
        return Context(tuple(zip(self.schema.names, self.leaves[leaf])))


def _draw_means(spec: EnvironmentSpec, leaves: list[NodeId], rng: np.random.Generator) -> np.ndarray:
    n_actions = action_count(spec.bucket_count)
    base = baseline_index(spec.bucket_count)
    level_sd = spec._level_signal_sd()
    cohort = rng.normal(0.0, spec.cohort_sd, size=(len(leaves), 3))
    signals: dict[NodeId, np.ndarray] = {}
    for depth in range(spec.schema.depth):
        for prefix in sorted({leaf[:depth] for leaf in leaves}):
            s = rng.normal(0.0, level_sd[depth], size=(n_actions, 3))
            s[base] = 0.0
            signals[prefix] = s
    perturb = rng.normal(0.0, spec.perturbation_sd, size=(len(leaves), n_actions, 3))
    perturb[:, base] = 0.0
    uplift = np.stack(
        [sum(signals[leaf[:d]] for d in range(spec.schema.depth)) for leaf in leaves]
    )
    return np.asarray(spec.base_mean, dtype=float) + cohort[:, None, :] + uplift + perturb


def build_environment(spec: EnvironmentSpec) -> Environment:
    """Materialize ``spec``; identical specs give identical environments."""
    leaves = [tuple(p) for p in itertools.product(*spec.vocabularies)]
    means_rng, context_rng, shift_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed % 2**64).spawn(3)
    )
    if spec.true_means is not None:
        first = np.array(spec.true_means, dtype=float)
    else:
        first = _draw_means(spec, leaves, means_rng)
    epochs = [first]
    if spec.shift_round is not None:
        epochs.append(_draw_means(spec, leaves, shift_rng))
    if spec.context_weights is not None:
        p = np.asarray(spec.context_weights, dtype=float)
    else:
        order = context_rng.permutation(len(leaves))
        p = np.empty(len(leaves))
        p[order] = (np.arange(len(leaves)) + 1.0) ** -spec.context_skew
    return Environment(spec, epochs, p / p.sum())


def sample_context(env: Environment, rng: np.random.Generator) -> Context:
    # inverse-CDF draw; one uniform per context
    return env.context(int(np.searchsorted(env._cdf, rng.random(), side="right")))


def sample_metrics(
    env: Environment, context: Context, action: ActionVector, rng: np.random.Generator, t: int = 0
) -> MetricVector:
    """True mean for (leaf, arm) plus independent Gaussian noise per metric."""
    mean = env.means(t)[env.leaf_of(context), action.index]
    noise = rng.normal(0.0, 1.0, size=3) * env._noise
    return MetricVector(*(mean + noise))


def oracle_action(env: Environment, leaf: NodeId | int, weights: RewardWeights, t: int = 0) -> ActionVector:
    """Best arm by expected scalar reward, baseline included; ties go to the lowest index."""
    i = leaf if isinstance(leaf, (int, np.integer)) else env.leaf_index[tuple(leaf)]
    rewards = env.expected_rewards(weights, t)[i]
    return ActionVector.from_index(int(np.argmax(rewards)), env.bucket_count)


# (environment, leaf index, round) -> arm; replaces the learning policy
ActionOverride = Callable[[Environment, int, int], ActionVector]


def oracle_override(weights: RewardWeights) -> ActionOverride:
    return lambda env, leaf, t: oracle_action(env, leaf, weights, t)


@dataclass
class SimulationResult:
    t: np.ndarray
    leaf: np.ndarray
    action: np.ndarray
    realized_reward: np.ndarray
    expected_reward: np.ndarray
    oracle_reward: np.ndarray
    leaves: list[NodeId]
    decisions: list = field(default_factory=list, repr=False)
    state: PolicyState | None = field(default=None, repr=False, compare=False)

    @property
    def instant_regret(self) -> np.ndarray:
        return self.oracle_reward - self.expected_reward

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.instant_regret)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.t.size else 0.0

    def rows(self):
        """Trajectory rows in CSV column order."""
        inst, cum = self.instant_regret, self.cumulative_regret
        for k in range(self.t.size):
            yield (
                int(self.t[k]),
                "/".join(self.leaves[self.leaf[k]]),
                int(self.action[k]),
                float(self.realized_reward[k]),
                float(self.expected_reward[k]),
                float(self.oracle_reward[k]),
                float(inst[k]),
                float(cum[k]),
            )


def run_simulation(
    env: Environment,
    estimator: EstimatorConfig,
    policy: PolicyConfig,
    weights: RewardWeights,
    horizon: int,
    seed: int,
    action_override: ActionOverride | None = None,
) -> SimulationResult:
    """Play ``horizon`` rounds against ``env`` and account regret.

    Contexts and observation noise come from two streams spawned from
    ``seed``, so they are the same whatever the policy does. Bootstrap
    streams are seeded from ``estimator.rng_seed`` combined with ``seed``.
    """
    if horizon < 1:
        raise InvalidArgumentError("horizon must be >= 1")
    bound = np.abs(env.true_uplifts(weights)).max()
    if env.spec.shift_round is not None:
        bound = max(bound, np.abs(env.true_uplifts(weights, env.spec.shift_round)).max())
    if policy.optimistic_init <= bound:
        raise InvalidArgumentError(
            f"optimistic_init {policy.optimistic_init} must exceed the largest true uplift {bound:.4g}"
        )
    ctx_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed % 2**64).spawn(2))
    boot_seed = int(np.random.SeedSequence([estimator.rng_seed % 2**64, seed % 2**64]).generate_state(1, np.uint64)[0])
    state = PolicyState.create(
        env.schema, env.bucket_count, replace(estimator, rng_seed=boot_seed), policy, weights
    )
    out = {k: np.empty(horizon, dtype=np.int64) for k in ("t", "leaf", "action")}
    out.update({k: np.empty(horizon) for k in ("realized", "expected", "oracle")})
    for t in range(horizon):
        context = sample_context(env, ctx_rng)
        leaf = env.leaf_of(context)
        observed: list[MetricVector] = []

        def feedback(ctx: Context, action: ActionVector) -> MetricVector:
            observed.append(sample_metrics(env, ctx, action, noise_rng, t))
            return observed[-1]

        if action_override is None:
            action, state = run_round(state, context, feedback)
        else:
            action = action_override(env, leaf, t)
            obs = Observation(context, action, feedback(context, action), t)
            record_observation(state.store, state.tree, obs, weights)
            state.t += 1
        rewards = env.expected_rewards(weights, t)[leaf]
        out["t"][t] = t
        out["leaf"][t] = leaf
        out["action"][t] = action.index
        out["realized"][t] = weighted_combine(observed[-1], weights)
        out["expected"][t] = rewards[action.index]
        out["oracle"][t] = rewards.max()
    return SimulationResult(
        out["t"], out["leaf"], out["action"], out["realized"], out["expected"], out["oracle"],
        env.leaves, state.decisions, state,
    )


@dataclass
class AblationReport:
    seeds: list[int]
    regret_on: list[float]
    regret_off: list[float]
    relative_improvement: list[float]
    mean_relative_improvement: float
    n_better: int
    n_worse: int
    sign_test_pvalue: float
    results_on: list[SimulationResult] = field(default_factory=list, repr=False)
    results_off: list[SimulationResult] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {
            "seeds": self.seeds,
            "regret_on": self.regret_on,
            "regret_off": self.regret_off,
            "relative_improvement": self.relative_improvement,
            "mean_relative_improvement": self.mean_relative_improvement,
            "n_better": self.n_better,
            "n_worse": self.n_worse,
            "sign_test_pvalue": self.sign_test_pvalue,
        }


def relative_improvement(regret_off: float, regret_on: float) -> float:
    """``(off - on) / off``; 0 when both are zero, NaN when only ``off`` is."""
    if regret_off == 0:
        return 0.0 if regret_on == 0 else float("nan")
    return (regret_off - regret_on) / regret_off


def sign_test(differences: Sequence[float]) -> tuple[int, int, float]:
    """Two-sided paired sign test; zero differences are dropped."""
    d = np.asarray(differences, dtype=float)
    n_pos, n_neg = int((d > 0).sum()), int((d < 0).sum())
    if n_pos + n_neg == 0:
        return n_pos, n_neg, 1.0
    return n_pos, n_neg, float(stats.binomtest(n_pos, n_pos + n_neg, 0.5).pvalue)


def ablation_compare(
    spec: EnvironmentSpec,
    estimator: EstimatorConfig,
    policy: PolicyConfig,
    weights: RewardWeights,
    horizon: int,
    seeds: Sequence[int],
    flags: tuple[bool, bool] = (True, False),
    redraw_environment: bool = True,
    keep_results: bool = False,
) -> AblationReport:
    """Paired comparison of the policy with and without inheritance.

    For every seed both variants face the same environment, context
    sequence and noise stream; only ``inheritance_enabled`` differs (taken
    from ``flags`` as (treatment, control)). With ``redraw_environment`` each
    seed also draws its own environment (``spec.seed + seed``).
    """
    seeds = list(seeds)
    if len(seeds) < 2:
        raise InvalidArgumentError("ablation needs at least 2 seeds")
    on, off, res_on, res_off = [], [], [], []
    for s in seeds:
        env = build_environment(replace(spec, seed=spec.seed + s) if redraw_environment else spec)
        r_on = run_simulation(env, estimator, replace(policy, inheritance_enabled=flags[0]), weights, horizon, s)
        r_off = run_simulation(env, estimator, replace(policy, inheritance_enabled=flags[1]), weights, horizon, s)
        on.append(r_on.final_regret)
        off.append(r_off.final_regret)
        if keep_results:
            res_on.append(r_on)
            res_off.append(r_off)
    rel = [relative_improvement(f, n) for f, n in zip(off, on)]
    n_pos, n_neg, p = sign_test([f - n for f, n in zip(off, on)])
    return AblationReport(
        seeds, on, off, rel, float(np.nanmean(rel)) if not all(map(math.isnan, rel)) else float("nan"),
        n_pos, n_neg, p, res_on, res_off,
    )
