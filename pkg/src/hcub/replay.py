"""Line-delimited observation logs and batch re-estimation over them.

One JSON object per line::

    {"round": 12, "context": {"tour": "T1", "round": "R2", "cohort": "C3"},
     "action": 40, "metrics": [0.7, 1.2, 35.0]}

``action`` is the arm's base-3 index and ``metrics`` is
(engagement, retention proxy, revenue).
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from typing import Iterable

from .core import ActionVector, Context, MetricVector, RewardWeights
from .errors import HCUBError, InvalidArgumentError, LogFormatError
from .tree import ContextTree, TreeSchema, build_tree
from .uplift import (
    EstimateTable,
    EstimatorConfig,
    Observation,
    ObservationStore,
    compute_tree_estimates,
    record_observation,
)

log = logging.getLogger(__name__)

RECORD_FIELDS = ("round", "context", "action", "metrics")


def observation_to_record(obs: Observation) -> dict:
    return {
        "round": obs.round,
        "context": obs.context.as_dict(),
        "action": obs.action.index,
        "metrics": list(obs.metrics.as_tuple()),
    }


def format_record(obs: Observation) -> str:
    return json.dumps(observation_to_record(obs), separators=(",", ":"))


def parse_record(line: str, schema: TreeSchema, bucket_count: int) -> Observation:
    """Parse one log line; raises ``LogFormatError`` (without a line number)."""
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise LogFormatError(f"not valid JSON ({exc.msg})") from None
    if not isinstance(rec, dict):
        raise LogFormatError("record must be a JSON object")
    missing = [f for f in RECORD_FIELDS if f not in rec]
    if missing:
        raise LogFormatError(f"missing field(s) {missing}")
    extra = sorted(set(rec) - set(RECORD_FIELDS))
    if extra:
        raise LogFormatError(f"unknown field(s) {extra}")
    rnd, ctx, action, metrics = (rec[f] for f in RECORD_FIELDS)
    if isinstance(rnd, bool) or not isinstance(rnd, int) or rnd < 0:
        raise LogFormatError(f"round must be a non-negative integer, got {rnd!r}")
    if not isinstance(ctx, dict) or list(ctx) != list(schema.names):
        got = list(ctx) if isinstance(ctx, dict) else ctx
        raise LogFormatError(f"context must have keys {list(schema.names)} in order, got {got!r}")
    if not all(isinstance(x, str) for x in ctx.values()):
        raise LogFormatError("context values must be strings")
    if isinstance(action, bool) or not isinstance(action, int):
        raise LogFormatError(f"action must be an integer index, got {action!r}")
    if (
        not isinstance(metrics, list)
        or len(metrics) != 3
        or not all(isinstance(m, (int, float)) and not isinstance(m, bool) for m in metrics)
        or not all(math.isfinite(m) for m in metrics)
    ):
        raise LogFormatError(f"metrics must be 3 finite numbers, got {metrics!r}")
    try:
        arm = ActionVector.from_index(action, bucket_count)
    except InvalidArgumentError as exc:
        raise LogFormatError(str(exc)) from None
    return Observation(Context(tuple(ctx.items())), arm, MetricVector(*metrics), rnd)


class ObservationLog(list):
    """Parsed observations in file order; ``skipped`` lists (line, reason)
    for lines dropped in lenient mode."""

    def __init__(self, observations: Iterable[Observation] = (), skipped=None):
        super().__init__(observations)
        self.skipped: list[tuple[int, str]] = list(skipped or [])


def load_observations(
    path: str | os.PathLike, schema: TreeSchema, bucket_count: int, strict: bool = True
) -> ObservationLog:
    """Read a log file.

    In strict mode the first malformed line raises ``LogFormatError`` with its
    line number; otherwise such lines are skipped and recorded in
    ``ObservationLog.skipped``. Blank lines are ignored. Rounds must not
    decrease.
    """
    out = ObservationLog()
    last_round = -1
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise LogFormatError(f"cannot read log {path}: {exc}") from None
    with fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obs = parse_record(line, schema, bucket_count)
                if obs.round < last_round:
                    raise LogFormatError(f"round {obs.round} after round {last_round}")
            except (LogFormatError, InvalidArgumentError) as exc:
                if strict:
                    raise LogFormatError(str(exc), line=no) from None
                log.warning("skipping line %d: %s", no, exc)
                out.skipped.append((no, str(exc)))
                continue
            last_round = obs.round
            out.append(obs)
    return out


def write_observations(path: str | os.PathLike, observations: Iterable[Observation]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obs in observations:
            fh.write(format_record(obs) + "\n")


@dataclass
class ReplayReport:
    tree: ContextTree
    store: ObservationStore
    with_inheritance: EstimateTable
    without_inheritance: EstimateTable

    def rows(self) -> list[dict]:
        """Side-by-side rows: shared keys plus ``on_*`` / ``off_*`` estimate fields."""
        rows = []
        for on, off in zip(self.with_inheritance.records(), self.without_inheritance.records()):
            row = {"node_path": on["node_path"], "action_index": on["action_index"]}
            for k in ("median", "ci_lower", "ci_upper", "n_treated", "n_baseline", "source"):
                row[f"on_{k}"] = on[k]
            for k in ("median", "ci_lower", "ci_upper", "n_treated", "n_baseline", "source"):
                row[f"off_{k}"] = off[k]
            rows.append(row)
        return rows

    def summary(self) -> dict:
        def sources(table: EstimateTable) -> dict[str, int]:
            counts: dict[str, int] = {}
            for leaf in self.tree.leaves():
                for r in table[leaf].source:
                    name = ("unavailable", "computed", "inherited")[int(r)]
                    counts[name] = counts.get(name, 0) + 1
            return counts

        return {
            "observations": len(self.store),
            "nodes": len(self.tree),
            "leaves": len(self.tree.leaves()),
            "leaf_sources_on": sources(self.with_inheritance),
            "leaf_sources_off": sources(self.without_inheritance),
        }


def replay_estimate(
    observations: Iterable[Observation],
    schema: TreeSchema,
    bucket_count: int,
    weights: RewardWeights,
    estimator: EstimatorConfig,
) -> ReplayReport:
    """Ingest a whole log and estimate once with and once without inheritance."""
    tree = build_tree(schema, bucket_count)
    store = ObservationStore()
    n = 0
    for obs in observations:
        try:
            record_observation(store, tree, obs, weights)
        except HCUBError as exc:
            raise type(exc)(f"observation {n}: {exc}") from exc
        n += 1
    if n == 0:
        raise InvalidArgumentError("cannot replay an empty log")
    return ReplayReport(
        tree,
        store,
        compute_tree_estimates(store, tree, estimator, inheritance_enabled=True),
        compute_tree_estimates(store, tree, estimator, inheritance_enabled=False),
    )

