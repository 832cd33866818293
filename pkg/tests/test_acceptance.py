"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to see the lines as
they are produced; they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcub import (
    EnvironmentSpec,
    EstimatorConfig,
    PolicyConfig,
    RewardWeights,
    TreeSchema,
    UpliftEstimate,
    EstimateSource,
    ChildWeight,
    aggregate_children,
    baseline_index,
    bootstrap_uplift,
    build_environment,
    enumerate_actions,
    propagate_inheritance,
    run_simulation,
    select_action,
    ablation_compare,
)
from hcub.cli import run_cli
from hcub.policy import argmax_action, score_arrays
from hcub.scenarios import (
    REFERENCE_HORIZON,
    REFERENCE_SEEDS,
    reference_configs,
    reference_spec,
    single_leaf_spec,
)
from hcub.uplift import EstimateTable, NodeEstimates
from oracles import exact_bootstrap_differences, exact_quantile

W = RewardWeights()
CASES = settings(max_examples=100, deadline=None, derandomize=True)


def test_criterion_1_online_ab_not_reproducible(criterion):
    criterion("1", None, "online A/B revenue and DAU deltas need the production platform; no target")


@pytest.mark.slow
def test_criterion_2_inheritance_ablation(criterion):
    est, pol = reference_configs()
    spec = reference_spec(0)
    env = build_environment(spec)
    sparse = int((env.context_p * REFERENCE_HORIZON < env.n_actions * est.min_samples_per_group).sum())
    assert sparse >= len(env.leaves) / 2, "scenario must leave at least half the leaves data-sparse"
    start = time.perf_counter()
    rep = ablation_compare(spec, est, pol, W, REFERENCE_HORIZON, REFERENCE_SEEDS)
    elapsed = time.perf_counter() - start
    ok = rep.mean_relative_improvement >= 0.03 and rep.sign_test_pvalue < 0.05
    criterion(
        "2",
        ok,
        f"mean relative improvement {rep.mean_relative_improvement:.4f} (>= 0.03), "
        f"sign test p={rep.sign_test_pvalue:.4g} (< 0.05), {rep.n_better}/{len(rep.seeds)} seeds better, "
        f"{sparse}/{len(env.leaves)} sparse leaves, {elapsed:.0f}s",
    )
    assert ok
    assert elapsed < 300


@pytest.mark.slow
def test_criterion_3_single_leaf_control(criterion):
    est, pol = reference_configs()
    rep = ablation_compare(single_leaf_spec(0), est, pol, W, REFERENCE_HORIZON, REFERENCE_SEEDS)
    ok = abs(rep.mean_relative_improvement) < 0.01
    criterion("3", ok, f"|mean relative improvement| = {abs(rep.mean_relative_improvement):.4f} (< 0.01)")
    assert ok


# treated, baseline; expected values come from the enumeration oracle
ORACLE_INSTANCES = [
    ([1, 2, 3], [0]),
    ([1, 2], [0, 1]),
    ([0, 0, 5], [1, 2]),
    ([2, 4, 4, 7], [1, 3]),
    ([1.5, -2, 0.5], [0.25, 1, -1]),
    ([3], [1, 2, 4, 8]),
]


def test_criterion_4_bootstrap_oracle_equivalence(criterion):
    cfg = EstimatorConfig(resample_count=100_000, min_samples_per_group=1, rng_seed=4)
    start = time.perf_counter()
    worst = 0.0
    for treated, baseline in ORACLE_INSTANCES:
        d = exact_bootstrap_differences(treated, baseline)
        exact = exact_quantile(d, 0.5)
        width = d.max() - d.min()
        got = bootstrap_uplift(treated, baseline, cfg).median
        worst = max(worst, abs(got - exact) / width)
    elapsed = time.perf_counter() - start
    ok = worst <= 0.02 and elapsed < 30 and len(ORACLE_INSTANCES) >= 5
    criterion(
        "4",
        ok,
        f"{len(ORACLE_INSTANCES)} instances, worst |median - exact| / range = {worst:.4f} (<= 0.02), {elapsed:.1f}s (< 30s)",
    )
    assert ok


# ---- criterion 5: invariant suite ---------------------------------------------

samples = st.lists(st.floats(-100, 100, allow_nan=False), min_size=1, max_size=8)


def test_criterion_5a_ci_ordering(criterion):
    @CASES
    @given(t=samples, b=samples, seed=st.integers(0, 2**32))
    def check(t, b, seed):
        e = bootstrap_uplift(t, b, EstimatorConfig(resample_count=100, min_samples_per_group=1, rng_seed=seed))
        assert e.ci_lower <= e.median <= e.ci_upper

    check()
    criterion("5a", True, "CI ordering lower <= median <= upper over 100 random inputs")


def test_criterion_5b_regret_monotone(criterion):
    schema = TreeSchema.of(("tour", "system"), ("cohort", "user"))

    @CASES
    @given(seed=st.integers(0, 10**6), horizon=st.integers(1, 40), inherit=st.booleans())
    def check(seed, horizon, inherit):
        env = build_environment(
            EnvironmentSpec(schema, (("T1", "T2"), ("C1", "C2")), bucket_count=1, seed=seed)
        )
        r = run_simulation(
            env, EstimatorConfig(resample_count=50, min_samples_per_group=2),
            PolicyConfig(refresh_interval=3, inheritance_enabled=inherit), W, horizon, seed,
        )
        assert np.all(r.instant_regret >= 0) and np.all(np.diff(r.cumulative_regret) >= 0)

    check()
    criterion("5b", True, "regret non-negative and cumulative regret non-decreasing over 100 runs")


finite_est = st.tuples(st.floats(-10, 10), st.floats(0, 5), st.floats(0, 5)).map(
    lambda x: UpliftEstimate(x[0], x[0] - x[1], x[0] + x[2], 30, 30, EstimateSource.COMPUTED)
)


def test_criterion_5c_single_child_identity(criterion):
    @CASES
    @given(e=finite_est)
    def check(e):
        assert aggregate_children([e], [ChildWeight(("c",), 1.0)]) == e

    check()
    criterion("5c", True, "aggregation single-child identity over 100 estimates")


def test_criterion_5d_inheritance_idempotence(criterion):
    schema = TreeSchema.of(("a", "system"), ("b", "user"))

    @CASES
    @given(
        leaves=st.lists(st.tuples(st.sampled_from("xyz"), st.sampled_from("pq")), min_size=1, max_size=6, unique=True),
        data=st.data(),
    )
    def check(leaves, data):
        from hcub import build_tree

        tree = build_tree(schema, 1)
        for leaf in leaves:
            tree.resolve_path(schema.context(*leaf), materialize=True)
        table = EstimateTable(1)
        for node in tree.iter_top_down():
            ne = NodeEstimates.empty(2)
            for col in range(2):
                if data.draw(st.booleans()):
                    ne.set(col, data.draw(finite_est))
            table.nodes[node] = ne
        once = propagate_inheritance(tree, table)
        assert propagate_inheritance(tree, once).same_as(once)

    check()
    criterion("5d", True, "inheritance idempotence over 100 random trees")


def test_criterion_5e_argmax_shift_invariance(criterion):
    @CASES
    @given(scores=st.lists(st.integers(-10**6, 10**6), min_size=9, max_size=9, unique=True), k=st.integers(-10**6, 10**6))
    def check(scores, k):
        totals = np.array(scores, dtype=float)
        assert argmax_action(totals, 4) == argmax_action(totals + k, 4)

    check()
    criterion("5e", True, "argmax shift invariance over 100 score vectors")


def test_criterion_5f_baseline_floor(criterion):
    @CASES
    @given(data=st.data())
    def check(data):
        ne = NodeEstimates.empty(8)
        for col in range(8):
            if data.draw(st.booleans()):
                ne.set(col, data.draw(finite_est))
        table = EstimateTable(2, {("L",): ne})
        cfg = PolicyConfig()
        a = select_action(("L",), table, cfg)
        exploit, explore = score_arrays(ne, cfg, 2)
        assert exploit[a.index] + explore[a.index] >= 0

    check()
    criterion("5f", True, "chosen UCB score >= 0 over 100 estimate tables")


def test_criterion_5g_simulate_determinism(criterion, repo_root, tmp_path):
    cfg = repo_root / "configs" / "quickstart.toml"
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [run_cli(["simulate", "--config", str(cfg), "--out", str(o)]) for o in outs]
    same = (outs[0] / "trajectory.csv").read_bytes() == (outs[1] / "trajectory.csv").read_bytes()
    ok = codes == [0, 0] and same
    criterion("5g", ok, "two identically seeded simulate runs give byte-identical trajectory CSVs")
    assert ok


def test_criterion_6_action_space(criterion):
    arms = enumerate_actions(4)
    distinct = len({a.levels for a in arms})
    ok = len(arms) == 81 == distinct and baseline_index(4) == 40 == (3**4 - 1) // 2
    ok = ok and [a.index for a in arms] == list(range(81)) and str(arms[40]) == "[M, M, M, M]"
    criterion("6", ok, f"{distinct} distinct arms, baseline index {baseline_index(4)}")
    assert ok


def test_criterion_7_zero_noise_convergence(criterion):
    schema = TreeSchema.of(("cohort", "user"))
    worst = 0
    failures = []
    for b in (1, 2, 3):
        for seed in range(10):
            env = build_environment(
                EnvironmentSpec(schema, (("C1",),), bucket_count=b, signal_sd=1.0, noise_sd=(0, 0, 0), seed=seed)
            )
            for inherit in (False, True):
                r = run_simulation(
                    env, EstimatorConfig(min_samples_per_group=1, resample_count=20),
                    PolicyConfig(refresh_interval=1, inheritance_enabled=inherit), W, 3**b + 60, seed,
                )
                nonzero = np.flatnonzero(r.instant_regret != 0)
                first_zero_round = 1 if nonzero.size == 0 else int(nonzero[-1]) + 2
                worst = max(worst, first_zero_round - 3**b)
                if first_zero_round > 3**b + 1:
                    failures.append((b, seed, inherit, first_zero_round))
    ok = not failures
    criterion("7", ok, f"regret 0 from round <= 3^B + 1 onward for B in 1..3, 10 envs each (worst slack {worst - 1:+d})")
    assert ok, failures
