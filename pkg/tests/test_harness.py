import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcub import (
    ActionVector,
    ConfigError,
    EstimateSource,
    EstimatorConfig,
    InvalidArgumentError,
    LogFormatError,
    MetricVector,
    Observation,
    RewardWeights,
    TreeSchema,
    baseline_action,
)
from hcub.cli import run_cli
from hcub.config import OUTPUT_DIR_ENV, parse_config, parse_config_text
from hcub.replay import format_record, load_observations, parse_record, replay_estimate, write_observations
from hcub.reporting import TRAJECTORY_COLUMNS, read_trajectory_csv, render_tree
from hcub.scenarios import REFERENCE_HORIZON, REFERENCE_SEEDS, reference_configs, reference_spec

LEVELS = """
[schema]
levels = [
  { name = "tour", role = "system", values = ["T1", "T2"] },
  { name = "cohort", role = "user", values = ["C1", "C2"] },
]
"""
MINIMAL = LEVELS + "\n[environment]\n"
SCHEMA2 = TreeSchema.of(("tour", "system"), ("cohort", "user"))


# ---- config -------------------------------------------------------------------

def test_minimal_config_defaults():
    cfg = parse_config_text(MINIMAL)
    assert cfg.weights.as_tuple() == (0.5, 0.5, 1.0)
    assert cfg.bucket_count == 4 and cfg.n_actions == 81
    assert cfg.estimator == EstimatorConfig()
    assert cfg.policy.inheritance_enabled is True
    assert cfg.replay_log is None and cfg.environment is not None
    eff = cfg.effective()
    assert eff["schema"]["n_actions"] == 81 and eff["weights"]["lambda3"] == 1.0


def test_both_environment_and_replay_rejected():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL + '\n[run]\nreplay_log = "x.jsonl"\n')
    assert exc.value.field == "run.replay_log" and exc.value.line is not None


def test_neither_environment_nor_replay_rejected():
    with pytest.raises(ConfigError):
        parse_config_text(LEVELS)


def test_replay_only_config(tmp_path):
    text = LEVELS + '\n[run]\nreplay_log = "logs/a.jsonl"\n'
    p = tmp_path / "c.toml"
    p.write_text(text)
    cfg = parse_config(p)
    assert cfg.environment is None and cfg.replay_log == tmp_path / "logs" / "a.jsonl"


@pytest.mark.parametrize(
    "extra, field",
    [
        ("\n[weights]\nlamda3 = 2.0\n", "weights.lamda3"),
        ("\n[schema2]\n", "schema2"),
        ("\n[policy]\nrefresh_interval = 1.5\n", "policy.refresh_interval"),
        ("\n[weights]\nlambda1 = -1.0\n", "weights.lambda1"),
        ("\n[estimator]\npercentile_low = 60.0\n", "estimator.percentile_low"),
        ("\n[run]\nhorizon = 0\n", "run.horizon"),
    ],
)
def test_strict_validation(extra, field):
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL + extra)
    assert exc.value.field == field
    assert exc.value.line is not None


def test_unknown_schema_key_cannot_change_arm_count():
    text = MINIMAL.replace("[schema]", "[schema]\nbuckets = 2")
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert exc.value.field == "schema.buckets" and exc.value.line == 3


def test_bad_bucket_count_and_toml_syntax():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(MINIMAL.replace("[schema]", "[schema]\nbucket_count = 0"))
    assert exc.value.field == "schema.bucket_count"
    with pytest.raises(ConfigError) as exc:
        parse_config_text("[schema\n")
    assert exc.value.line == 1


def test_environment_needs_level_values():
    text = '[schema]\nlevels = [{ name = "c", role = "user" }]\n[environment]\n'
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_output_dir_precedence(monkeypatch):
    cfg = parse_config_text(MINIMAL + '\n[run]\noutput_dir = "from-file"\n')
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert cfg.resolve_output_dir() == Path("from-file")
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from-env")
    assert cfg.resolve_output_dir() == Path("from-env")
    assert cfg.resolve_output_dir("from-cli") == Path("from-cli")


def test_reference_config_matches_scenario(repo_root):
    cfg = parse_config(repo_root / "configs" / "reference.toml")
    assert cfg.environment == reference_spec(0)
    est, pol = reference_configs()
    assert (cfg.estimator, cfg.policy) == (est, pol)
    assert cfg.horizon == REFERENCE_HORIZON and cfg.seeds == REFERENCE_SEEDS


# ---- observation logs ----------------------------------------------------------

def _obs(values=("T1", "C1"), action=40, metrics=(0.7, 1.2, 35.0), rnd=0, bucket_count=4):
    return Observation(SCHEMA2.context(*values), ActionVector.from_index(action, bucket_count), MetricVector(*metrics), rnd)


def test_empty_log(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_observations(p, SCHEMA2, 4) == []


def test_one_record_log(tmp_path):
    p = tmp_path / "one.jsonl"
    p.write_text('{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": 40, "metrics": [0.7, 1.2, 35.0]}\n')
    (o,) = load_observations(p, SCHEMA2, 4)
    assert o == _obs()


def test_action_out_of_range(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text(format_record(_obs()) + "\n" + format_record(_obs()).replace('"action":40', '"action":81') + "\n")
    with pytest.raises(LogFormatError) as exc:
        load_observations(p, SCHEMA2, 4)
    assert exc.value.line == 2 and "81" in str(exc.value)
    assert len(load_observations(p, SCHEMA2, 4, strict=False)) == 1


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        "[1, 2]",
        '{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": 40}',
        '{"round": 0, "context": {"cohort": "C1", "tour": "T1"}, "action": 40, "metrics": [1, 2, 3]}',
        '{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": 40, "metrics": [1, 2]}',
        '{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": 40, "metrics": [1, 2, NaN]}',
        '{"round": -1, "context": {"tour": "T1", "cohort": "C1"}, "action": 40, "metrics": [1, 2, 3]}',
        '{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": true, "metrics": [1, 2, 3]}',
        '{"round": 0, "context": {"tour": "T1", "cohort": "C1"}, "action": 4, "metrics": [1, 2, 3], "x": 1}',
    ],
)
def test_malformed_records(line):
    with pytest.raises(LogFormatError):
        parse_record(line, SCHEMA2, 4)


def test_lenient_mode_counts_skips(tmp_path):
    p = tmp_path / "mixed.jsonl"
    good = format_record(_obs())
    p.write_text("\n".join([good, "garbage", "", good, '{"a": 1}']) + "\n")
    log = load_observations(p, SCHEMA2, 4, strict=False)
    assert len(log) == 2 and [no for no, _ in log.skipped] == [2, 5]
    with pytest.raises(LogFormatError) as exc:
        load_observations(p, SCHEMA2, 4)
    assert exc.value.line == 2


def test_decreasing_round_in_log(tmp_path):
    p = tmp_path / "rounds.jsonl"
    write_observations(p, [_obs(rnd=3), _obs(rnd=2)])
    with pytest.raises(LogFormatError) as exc:
        load_observations(p, SCHEMA2, 4)
    assert exc.value.line == 2


def test_missing_log_file(tmp_path):
    with pytest.raises(LogFormatError):
        load_observations(tmp_path / "nope.jsonl", SCHEMA2, 4)


@settings(max_examples=150, deadline=None)
@given(
    values=st.tuples(st.text(min_size=1, max_size=5), st.text(min_size=1, max_size=5)),
    action=st.integers(0, 80),
    metrics=st.tuples(*[st.floats(allow_nan=False, allow_infinity=False)] * 3),
    rnd=st.integers(0, 10**9),
)
def test_record_round_trip(values, action, metrics, rnd):
    obs = _obs(values, action, metrics, rnd)
    assert parse_record(format_record(obs), SCHEMA2, 4) == obs


# ---- replay ---------------------------------------------------------------------

def test_replay_baseline_only_all_unavailable():
    obs = [_obs(("T1", c), 40, (1, 1, 1), i) for i, c in enumerate(["C1", "C2"] * 40)]
    rep = replay_estimate(obs, SCHEMA2, 4, RewardWeights(), EstimatorConfig())
    for table in (rep.with_inheritance, rep.without_inheritance):
        for node in rep.tree.iter_top_down():
            assert (table[node].source == EstimateSource.UNAVAILABLE).all()


def test_replay_empty_log_rejected():
    with pytest.raises(InvalidArgumentError):
        replay_estimate([], SCHEMA2, 4, RewardWeights(), EstimatorConfig())


def test_replay_rich_leaf_inherited_only_when_on():
    rng = np.random.default_rng(0)
    obs = []
    for i in range(60):
        obs.append(_obs(("T1", "C1"), 4, (0, 0, 1.0 + rng.normal(0, 0.1)), i, bucket_count=2))
        obs.append(_obs(("T1", "C1"), 0, (0, 0, 3.0 + rng.normal(0, 0.1)), i, bucket_count=2))
    obs += [_obs(("T1", "C2"), 4, (0, 0, 1.0), 60 + i, bucket_count=2) for i in range(3)]
    rep = replay_estimate(obs, SCHEMA2, 2, RewardWeights(), EstimatorConfig())
    assert rep.with_inheritance.get(("T1", "C1"), 0).source is EstimateSource.COMPUTED
    sib_on = rep.with_inheritance.get(("T1", "C2"), 0)
    sib_off = rep.without_inheritance.get(("T1", "C2"), 0)
    assert sib_on.source is EstimateSource.INHERITED and sib_on.median == pytest.approx(2.0, abs=0.1)
    assert sib_off.source is EstimateSource.UNAVAILABLE
    rows = rep.rows()
    assert len(rows) == 4 * 8  # root, T1 and two leaves, 8 non-baseline arms each
    assert rep.summary()["leaf_sources_on"]["inherited"] >= 1


def test_replay_200_records_match_analytic_differences():
    # one leaf, B=1: 80 baseline, 60 on arm 0, 60 on arm 2; reward = revenue
    rng = np.random.default_rng(17)
    groups = {1: rng.normal(2.0, 1.0, 80), 0: rng.normal(2.5, 1.0, 60), 2: rng.normal(1.0, 1.0, 60)}
    obs = []
    for arm, values in groups.items():
        obs += [_obs(("T1", "C1"), arm, (0.0, 0.0, float(v)), 0, bucket_count=1) for v in values]
    assert len(obs) == 200
    rep = replay_estimate(obs, SCHEMA2, 1, RewardWeights(0, 0, 1), EstimatorConfig(resample_count=20_000))
    for arm in (0, 2):
        analytic = groups[arm].mean() - groups[1].mean()
        se = math.sqrt(groups[arm].var(ddof=0) / 60 + groups[1].var(ddof=0) / 80)
        e = rep.without_inheritance.get(("T1", "C1"), arm)
        assert abs(e.median - analytic) < 0.1 * se
        assert e.ci_lower < analytic < e.ci_upper
        # a 90% interval of a near-normal statistic spans about 2 * 1.645 standard errors
        assert (e.ci_upper - e.ci_lower) == pytest.approx(2 * 1.645 * se, rel=0.1)


def test_render_tree_lists_every_node():
    obs = [_obs(("T1", "C1"), 40, (1, 1, 1)), _obs(("T2", "C2"), 3, (1, 1, 1))]
    rep = replay_estimate(obs, SCHEMA2, 4, RewardWeights(), EstimatorConfig())
    text = render_tree(rep.tree, rep.with_inheritance)
    lines = text.splitlines()
    assert len(lines) == 5 and lines[0].startswith("(root)  n=2 baseline=1")
    assert "  tour=T1" in lines[1] and "all arms unavailable" in lines[0]


# ---- CLI -----------------------------------------------------------------------

SMALL = LEVELS.replace("[schema]", "[schema]\nbucket_count = 2") + """
[estimator]
resample_count = 100

[policy]
refresh_interval = 20

[environment]
seed = 4

[run]
horizon = 200
seeds = [0, 1]
"""


@pytest.fixture
def small_config(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_cli_ablate_outputs(small_config, tmp_path, capsys):
    out = tmp_path / "ab"
    assert run_cli(["ablate", "--config", str(small_config), "--out", str(out)]) == 0
    names = sorted(os.listdir(out))
    assert names == [
        "ablation_report.json",
        "trajectory_seed0_off.csv", "trajectory_seed0_on.csv",
        "trajectory_seed1_off.csv", "trajectory_seed1_on.csv",
    ]
    report = json.loads((out / "ablation_report.json").read_text())
    assert report["seeds"] == [0, 1] and len(report["regret_on"]) == 2
    assert report["config"]["run"]["horizon"] == 200
    assert "mean relative regret improvement" in capsys.readouterr().out


def test_cli_simulate_byte_identical(small_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(["simulate", "--config", str(small_config), "--out", str(a)]) == 0
    assert run_cli(["simulate", "--config", str(small_config), "--out", str(b)]) == 0
    for name in ("trajectory.csv", "summary.json", "decisions.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cli_summary_matches_trajectory(small_config, tmp_path):
    out = tmp_path / "s"
    run_cli(["simulate", "--config", str(small_config), "--out", str(out), "--seed", "3"])
    rows = read_trajectory_csv(out / "trajectory.csv")
    summary = json.loads((out / "summary.json").read_text())
    assert list(rows[0]) == list(TRAJECTORY_COLUMNS) and len(rows) == 200
    assert summary["final_cumulative_regret"] == float(rows[-1]["cumulative_regret"])
    assert summary["seed"] == 3 and summary["config"]["schema"]["n_actions"] == 9


def test_cli_output_dir_from_environment(small_config, tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(tmp_path / "envout"))
    assert run_cli(["simulate", "--config", str(small_config)]) == 0
    assert (tmp_path / "envout" / "trajectory.csv").exists()


def test_cli_validate_reference_config(repo_root, capsys):
    assert run_cli(["validate-config", "--config", str(repo_root / "configs" / "reference.toml")]) == 0
    eff = json.loads(capsys.readouterr().out)
    assert eff["schema"]["n_actions"] == 9 and eff["policy"]["refresh_interval"] == 50


def test_cli_validate_quickstart_config(repo_root):
    assert run_cli(["validate-config", "--config", str(repo_root / "configs" / "quickstart.toml")]) == 0


@pytest.mark.parametrize("argv", [[], ["frobnicate"], ["simulate"], ["simulate", "--config", "x", "--bogus"]])
def test_cli_usage_errors(argv):
    assert run_cli(argv) == 2


def test_cli_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(MINIMAL + "\n[weights]\nlamda3 = 2\n")
    assert run_cli(["validate-config", "--config", str(p)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("error: config-error: line ") and "weights.lamda3" in err


def test_cli_replay_and_inspect(tmp_path, capsys):
    log = tmp_path / "obs.jsonl"
    rng = np.random.default_rng(1)
    obs = []
    for i in range(40):
        obs.append(_obs(("T1", "C1"), 4, (0, 0, rng.normal(1, 0.2)), i, bucket_count=2))
        obs.append(_obs(("T1", "C1"), 8, (0, 0, rng.normal(2, 0.2)), i, bucket_count=2))
        obs.append(_obs(("T2", "C2"), 4, (0, 0, rng.normal(1, 0.2)), i, bucket_count=2))
    write_observations(log, obs)
    with open(log, "a") as fh:
        fh.write("broken line\n")
    cfg = tmp_path / "replay.toml"
    cfg.write_text(LEVELS.replace("[schema]", "[schema]\nbucket_count = 2") + '\n[run]\nreplay_log = "obs.jsonl"\n')
    out = tmp_path / "r"
    assert run_cli(["replay", "--config", str(cfg), "--out", str(out)]) == 1
    assert "log-format" in capsys.readouterr().err
    assert run_cli(["replay", "--config", str(cfg), "--out", str(out), "--lenient"]) == 0
    report = json.loads((out / "replay_report.json").read_text())
    assert report["observations"] == 120 and report["skipped_lines"][0][0] == 121
    header = (out / "replay_estimates.csv").read_text().splitlines()[0]
    assert header.startswith("node_path,action_index,on_median")
    capsys.readouterr()
    assert run_cli(["inspect-tree", "--config", str(cfg), "--lenient", "--action", "8"]) == 0
    text = capsys.readouterr().out
    assert "cohort=C1" in text and "arm 8 [H, H]" in text
    assert run_cli(["inspect-tree", "--config", str(cfg), "--lenient", "--json", "--out", str(out)]) == 0
    tree = json.loads((out / "tree.json").read_text())
    assert tree["label"] == "(root)" and len(tree["children"]) == 2


def test_cli_simulate_rejects_replay_config(tmp_path, capsys):
    cfg = tmp_path / "replay.toml"
    cfg.write_text(LEVELS + '\n[run]\nreplay_log = "obs.jsonl"\n')
    assert run_cli(["simulate", "--config", str(cfg)]) == 1
    assert "config-error" in capsys.readouterr().err
