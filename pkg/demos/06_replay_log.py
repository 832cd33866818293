"""
Estimating from a logged file
=============================

Logs hold one JSON record per line. Replaying a log estimates every
(node, arm) pair once with inheritance and once without.
"""

import tempfile
from pathlib import Path

import numpy as np

from hcub import ActionVector, EstimatorConfig, MetricVector, Observation, RewardWeights, TreeSchema
from hcub.replay import load_observations, replay_estimate, write_observations

schema = TreeSchema.of(("tour", "system"), ("cohort", "user"))
rng = np.random.default_rng(5)
records = []
for t in range(400):
    cohort = "casual" if t % 20 else "new"  # "new" is rare
    arm = ActionVector.from_index(int(rng.choice([4, 8])), 2)  # baseline or [H, H]
    revenue = 1.0 + (0.6 if arm.index == 8 else 0.0) + rng.normal(0, 0.5)
    records.append(Observation(schema.context("IPL", cohort), arm, MetricVector(0.0, 0.0, revenue), t))

path = Path(tempfile.mkdtemp()) / "observations.jsonl"
write_observations(path, records)
print(path.read_text().splitlines()[0])

log = load_observations(path, schema, bucket_count=2)
report = replay_estimate(log, schema, 2, RewardWeights(0, 0, 1), EstimatorConfig())
for row in report.rows():
    if row["action_index"] == 8:
        print(f"{row['node_path'] or '(root)':12s} on: {row['on_source']:9s} {row['on_median']}  "
              f"off: {row['off_source']:11s} {row['off_median']}")
