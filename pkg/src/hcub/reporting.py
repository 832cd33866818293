"""CSV/JSON writers and the text rendering of a context tree."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import ActionVector
from .simulator import AblationReport, SimulationResult
from .tree import ROOT, ContextTree, NodeId
from .uplift import EstimateSource, EstimateTable

TRAJECTORY_COLUMNS = (
    "t",
    "leaf_path",
    "action_index",
    "realized_reward",
    "expected_reward",
    "oracle_reward",
    "instant_regret",
    "cumulative_regret",
)


def write_trajectory_csv(path: str | os.PathLike, result: SimulationResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        w.writerows(result.rows())


def read_trajectory_csv(path: str | os.PathLike) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_records_csv(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    rows = list(rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: str | os.PathLike, payload: dict) -> None:
    Path(path).write_text(json.dumps(_clean(payload), indent=2, sort_keys=False) + "\n", encoding="utf-8")


def write_jsonl(path: str | os.PathLike, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(_clean(r), separators=(",", ":")) + "\n")


def simulation_summary(result: SimulationResult, config: dict | None = None, seed: int | None = None) -> dict:
    counts = np.bincount(result.action, minlength=0)
    return {
        "seed": seed,
        "horizon": int(result.t.size),
        "final_cumulative_regret": result.final_regret,
        "mean_instant_regret": float(result.instant_regret.mean()) if result.t.size else 0.0,
        "mean_realized_reward": float(result.realized_reward.mean()) if result.t.size else 0.0,
        "action_counts": {str(a): int(c) for a, c in enumerate(counts) if c},
        "config": config,
    }


def ablation_payload(report: AblationReport, config: dict | None = None) -> dict:
    return {**report.summary(), "config": config}


def _node_label(tree: ContextTree, node: NodeId) -> str:
    if node == ROOT:
        return "(root)"
    return f"{tree.schema.names[len(node) - 1]}={node[-1]}"


def _estimate_text(table: EstimateTable, node: NodeId, action: int | None, bucket_count: int) -> str:
    if node not in table:
        return "no estimates"
    est = table[node]
    if action is None:
        med = np.where(est.source == EstimateSource.UNAVAILABLE, -np.inf, est.median)
        if not np.isfinite(med).any():
            return "all arms unavailable"
        col = int(np.argmax(med))
    else:
        col = table.column(action)
    a = int(table.actions[col])
    e = est.estimate(col)
    arm = f"arm {a} {ActionVector.from_index(a, bucket_count)}"
    if not e.available:
        return f"{arm}: unavailable"
    return f"{arm}: {e.median:+.4f} [{e.ci_lower:+.4f}, {e.ci_upper:+.4f}] {e.source}"


def render_tree(tree: ContextTree, table: EstimateTable | None = None, action: int | None = None) -> str:
    """Indented text dump of ``tree`` with sample counts.

    With a table, each node also shows one estimate: ``action`` if given,
    otherwise the arm with the highest available median.
    """
    base = tree.n_actions // 2
    lines = []
    for node in _depth_first(tree):
        counts = tree.counts(node)
        text = f"{'  ' * len(node)}{_node_label(tree, node)}  n={int(counts.sum())} baseline={int(counts[base])}"
        if table is not None:
            text += "  " + _estimate_text(table, node, action, tree.bucket_count)
        lines.append(text)
    return "\n".join(lines) + "\n"


def tree_to_dict(tree: ContextTree, table: EstimateTable | None = None) -> dict:
    def build(node: NodeId) -> dict:
        out = {
            "path": list(node),
            "label": _node_label(tree, node),
            "counts": {str(a): int(c) for a, c in enumerate(tree.counts(node)) if c},
        }
        if table is not None and node in table:
            est = table[node]
            out["estimates"] = [
                {**est.estimate(col).__dict__, "source": str(est.estimate(col).source), "action_index": int(a)}
                for col, a in enumerate(table.actions)
            ]
        out["children"] = [build(c) for c in tree.children(node)]
        return out

    return _clean(build(ROOT))


def _depth_first(tree: ContextTree):
    stack = [ROOT]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(tree.children(node)))
