"""
Context tree and reward inheritance
===================================

Observations land on leaves (one cohort within a round of a tour). Leaf
estimates are pooled upwards by cohort size; a leaf without a significant
estimate of its own takes its parent's.
"""

import numpy as np

from hcub import (
    EstimatorConfig,
    MetricVector,
    Observation,
    ObservationStore,
    RewardWeights,
    TreeSchema,
    build_tree,
    compute_tree_estimates,
    enumerate_actions,
    record_observation,
)
from hcub.reporting import render_tree

schema = TreeSchema.of(("tour", "system"), ("cohort", "user"))
tree, store = build_tree(schema, bucket_count=1), ObservationStore()
low, medium, high = enumerate_actions(1)
rng = np.random.default_rng(1)


def serve(tour, cohort, arm, revenue, n):
    for _ in range(n):
        obs = Observation(schema.context(tour, cohort), arm, MetricVector(0.0, 0.0, revenue + rng.normal(0, 0.3)))
        record_observation(store, tree, obs, RewardWeights(0, 0, 1))


# A busy cohort with plenty of data: High beats Medium by about 0.5.
serve("IPL", "power", medium, 1.0, 60)
serve("IPL", "power", high, 1.5, 60)
# A quiet cohort with only a handful of pulls.
serve("IPL", "new", medium, 1.0, 5)
serve("IPL", "new", high, 1.5, 4)

cfg = EstimatorConfig()
with_inheritance = compute_tree_estimates(store, tree, cfg, inheritance_enabled=True)
without = compute_tree_estimates(store, tree, cfg, inheritance_enabled=False)

print(render_tree(tree, with_inheritance, action=high.index))
print("quiet cohort, inheritance on :", with_inheritance.get(("IPL", "new"), high.index))
print("quiet cohort, inheritance off:", without.get(("IPL", "new"), high.index))
