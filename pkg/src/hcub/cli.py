"""Command-line entry point: ``hcub <subcommand> --config run.toml``.

Exit codes: 0 success, 1 failure (``error: <class>: message`` on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from .config import RunConfig, parse_config
from .errors import ConfigError, HCUBError
from .replay import load_observations, replay_estimate
from .reporting import (
    ablation_payload,
    render_tree,
    simulation_summary,
    tree_to_dict,
    write_json,
    write_jsonl,
    write_records_csv,
    write_trajectory_csv,
)
from .simulator import ablation_compare, build_environment, run_simulation

log = logging.getLogger("hcub")


def _out_dir(cfg: RunConfig, args: argparse.Namespace) -> Path:
    out = cfg.resolve_output_dir(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _need_environment(cfg: RunConfig, command: str):
    if cfg.environment is None:
        raise ConfigError(f"'{command}' needs an [environment] section", field="environment")
    return cfg.environment


def _load_log(cfg: RunConfig, args: argparse.Namespace):
    path = getattr(args, "log", None) or cfg.replay_log
    if path is None:
        raise ConfigError("no observation log: set run.replay_log or pass --log", field="run.replay_log")
    strict = cfg.strict_log and not getattr(args, "lenient", False)
    obs = load_observations(path, cfg.schema, cfg.bucket_count, strict=strict)
    if obs.skipped:
        log.warning("skipped %d malformed line(s) in %s", len(obs.skipped), path)
    return obs


def cmd_validate_config(cfg: RunConfig, args: argparse.Namespace) -> int:
    print(json.dumps(cfg.effective(), indent=2))
    return 0


def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    env = build_environment(_need_environment(cfg, "simulate"))
    seed = cfg.seeds[0] if args.seed is None else args.seed
    result = run_simulation(env, cfg.estimator, cfg.policy, cfg.weights, cfg.horizon, seed)
    out = _out_dir(cfg, args)
    write_trajectory_csv(out / "trajectory.csv", result)
    write_jsonl(out / "decisions.jsonl", (d.record() for d in result.decisions))
    write_json(out / "summary.json", simulation_summary(result, cfg.effective(), seed))
    print(f"final cumulative regret {result.final_regret:.6g} over {cfg.horizon} rounds -> {out}")
    return 0


def cmd_ablate(cfg: RunConfig, args: argparse.Namespace) -> int:
    spec = _need_environment(cfg, "ablate")
    report = ablation_compare(
        spec, cfg.estimator, cfg.policy, cfg.weights, cfg.horizon, cfg.seeds, keep_results=True
    )
    out = _out_dir(cfg, args)
    for seed, on, off in zip(report.seeds, report.results_on, report.results_off):
        write_trajectory_csv(out / f"trajectory_seed{seed}_on.csv", on)
        write_trajectory_csv(out / f"trajectory_seed{seed}_off.csv", off)
    write_json(out / "ablation_report.json", ablation_payload(report, cfg.effective()))
    print(
        f"mean relative regret improvement {report.mean_relative_improvement:+.4f} "
        f"({report.n_better} better / {report.n_worse} worse, sign test p={report.sign_test_pvalue:.4g}) -> {out}"
    )
    return 0


def cmd_replay(cfg: RunConfig, args: argparse.Namespace) -> int:
    observations = _load_log(cfg, args)
    report = replay_estimate(observations, cfg.schema, cfg.bucket_count, cfg.weights, cfg.estimator)
    out = _out_dir(cfg, args)
    write_records_csv(out / "replay_estimates.csv", report.rows())
    summary = report.summary()
    summary["skipped_lines"] = [list(s) for s in observations.skipped]
    summary["config"] = cfg.effective()
    write_json(out / "replay_report.json", summary)
    print(f"replayed {len(observations)} observations over {summary['leaves']} leaves -> {out}")
    return 0


def cmd_inspect_tree(cfg: RunConfig, args: argparse.Namespace) -> int:
    if args.log or cfg.replay_log is not None:
        report = replay_estimate(_load_log(cfg, args), cfg.schema, cfg.bucket_count, cfg.weights, cfg.estimator)
        tree = report.tree
        table = report.with_inheritance if cfg.policy.inheritance_enabled else report.without_inheritance
    else:
        env = build_environment(_need_environment(cfg, "inspect-tree"))
        seed = cfg.seeds[0] if args.seed is None else args.seed
        result = run_simulation(env, cfg.estimator, cfg.policy, cfg.weights, cfg.horizon, seed)
        tree, table = result.state.tree, result.state.refresh()
    text = render_tree(tree, table, args.action)
    if args.json:
        text = json.dumps(tree_to_dict(tree, table), indent=2) + "\n"
    sys.stdout.write(text)
    if args.out:
        out = _out_dir(cfg, args)
        (out / ("tree.json" if args.json else "tree.txt")).write_text(text, encoding="utf-8")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hcub", description="Hierarchical contextual uplift bandit experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", required=True, help="TOML run config")
        sp.set_defaults(func=func)
        return sp

    sp = add("simulate", cmd_simulate, "run one simulation; writes trajectory.csv and summary.json")
    sp.add_argument("--out", help="output directory (overrides run.output_dir and $HCUB_OUTPUT_DIR)")
    sp.add_argument("--seed", type=int, help="run seed (default: first of run.seeds)")

    sp = add("ablate", cmd_ablate, "inheritance on/off comparison across run.seeds")
    sp.add_argument("--out")

    sp = add("replay", cmd_replay, "estimate from a logged observation file, with and without inheritance")
    sp.add_argument("--out")
    sp.add_argument("--log", help="observation log (default: run.replay_log)")
    sp.add_argument("--lenient", action="store_true", help="skip malformed lines instead of failing")

    sp = add("inspect-tree", cmd_inspect_tree, "print the context tree with counts and estimates")
    sp.add_argument("--out")
    sp.add_argument("--log")
    sp.add_argument("--lenient", action="store_true")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--action", type=int, help="show this arm's estimate (default: best median)")
    sp.add_argument("--json", action="store_true", help="emit JSON instead of text")

    add("validate-config", cmd_validate_config, "parse and validate a config, print the effective config")
    return p


def run_cli(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        return args.func(cfg, args)
    except HCUBError as exc:
        print(f"error: {exc.error_class}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: io-error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
